"""Bucket elimination over decision diagrams with a node budget.

Variables are processed from the last position of the order to the first;
every diagram sits in the bucket of its highest-positioned support variable.
A bucket is worked down by multiplying its two currently smallest diagrams
(re-quantizing whenever an intermediate outgrows the budget k), then its
variable is summed out and the result is routed to the bucket of its highest
remaining support variable, or folded into the accumulated log Z once it is
constant.  With k = inf nothing is ever quantized and the result is exact;
with upper/lower quantization the result is a one-sided bound on ln Z
because every rewrite dominates (is dominated by) the function it replaces
and multiplication and summation preserve pointwise dominance.

Two extensions beyond multiply-triggered quantization keep the size
discipline airtight at small k: diagrams built straight from potentials and
sum-out results are also quantized when they exceed k.  Without these a
single ternary table (15 nodes) would blow the k*k product envelope at k=2.

A variable whose bucket is empty when reached was dropped by every diagram
that once mentioned it (or never appeared at all); summing it out of the
constant-1 remainder contributes a factor 2, so ln 2 is added to log Z.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Iterator, Mapping

from .add import AddStore, ScaledAdd, from_potential, mul_deferred, sum_out
from .errors import BadParameter, DeadlineExceeded, OutOfBudget
from .model import MarkovNet, primal_graph
from .quantize import QuantizeConfig, quantize_to_bound

__all__ = [
    "EliminationOrder",
    "minfill_order",
    "AbqResult",
    "AbqRecord",
    "abq",
    "abq_anytime",
]

_LN2 = math.log(2.0)
_LN10 = math.log(10.0)


@dataclass(frozen=True)
class EliminationOrder:
    """A permutation of the graph's variables; elimination runs back to front.

    order[-1] is eliminated first and sits nearest the leaves of every
    diagram; order[0] is eliminated last and is tested at the roots.
    induced_width is the largest neighborhood met while eliminating.
    """

    order: tuple[int, ...]
    induced_width: int


def minfill_order(graph: Mapping[int, set[int]]) -> EliminationOrder:
    """Greedy ordering: repeatedly eliminate the vertex adding the fewest
    fill edges, ties by smaller degree, then smaller id."""
    adj = {v: set(nb) for v, nb in graph.items()}
    seq: list[int] = []
    width = 0
    while adj:
        best_v = None
        best_key = None
        for v in sorted(adj):
            nb = sorted(adj[v])
            fill = 0
            for i in range(len(nb)):
                ni = adj[nb[i]]
                for j in range(i + 1, len(nb)):
                    if nb[j] not in ni:
                        fill += 1
            key = (fill, len(nb), v)
            if best_key is None or key < best_key:
                best_v, best_key = v, key
        v = best_v
        nb = sorted(adj[v])
        if len(nb) > width:
            width = len(nb)
        for i in range(len(nb)):
            for j in range(i + 1, len(nb)):
                adj[nb[i]].add(nb[j])
                adj[nb[j]].add(nb[i])
        for u in nb:
            adj[u].discard(v)
        del adj[v]
        seq.append(v)
    return EliminationOrder(tuple(reversed(seq)), width)


@dataclass
class AbqResult:
    log_z: float                   # natural log; -inf for a zero partition function
    max_intermediate_nodes: int    # largest diagram seen anywhere in the run
    max_multiply_nodes: int        # largest multiplication output before quantization
    max_post_quantize_nodes: int   # largest diagram right after a quantization
    quantized: bool                # False means the run was exact
    multiplications: int


def abq(net: MarkovNet, k: float = math.inf, cfg: QuantizeConfig | None = None,
        order: EliminationOrder | None = None, *,
        deadline: float | None = None,
        max_nodes: int | None = None) -> AbqResult:
    """Bounded elimination; k = inf runs exact, finite k >= 2 caps every
    stored diagram at k nodes using cfg's heuristic and mode."""
    finite = k != math.inf
    if finite:
        if int(k) != k or k < 2:
            raise BadParameter("k must be an integer >= 2, or inf")
        k = int(k)
    if cfg is None:
        cfg = QuantizeConfig()
    qcfg = replace(cfg, node_budget=k) if finite else None
    if order is None:
        order = minfill_order(primal_graph(net))
    store = AddStore(order.order, max_nodes=max_nodes)
    pos_of = store.position
    buckets: list[list[ScaledAdd]] = [[] for _ in order.order]

    res = AbqResult(0.0, 1, 0, 0, False, 0)

    def note(sa: ScaledAdd):
        c = store.node_count_h(sa.handle)
        if c > res.max_intermediate_nodes:
            res.max_intermediate_nodes = c

    def shrink(sa: ScaledAdd) -> ScaledAdd:
        if finite and store.node_count_h(sa.handle) > k:
            sa = quantize_to_bound(store, sa, qcfg)
            res.quantized = True
            c = store.node_count_h(sa.handle)
            if c > res.max_post_quantize_nodes:
                res.max_post_quantize_nodes = c
        return sa

    def route(sa: ScaledAdd):
        sup = store.support_h(sa.handle)
        if not sup:
            if sa.handle == store.zero:
                res.log_z = -math.inf
            else:
                res.log_z += sa.log_scale + math.log(store.leaf_value(sa.handle))
        else:
            buckets[max(pos_of[v] for v in sup)].append(sa)

    for p in net.potentials:
        sa = from_potential(store, p)
        note(sa)
        route(shrink(sa))

    for pos in range(len(order.order) - 1, -1, -1):
        if deadline is not None and time.monotonic() > deadline:
            raise DeadlineExceeded(f"deadline hit at bucket position {pos}")
        bucket = buckets[pos]
        if not bucket:
            # nothing mentions this variable any more; it still ranges over
            # two values, so the partition sum doubles
            res.log_z += _LN2
            continue
        while len(bucket) > 1:
            i1 = min(range(len(bucket)),
                     key=lambda i: (store.node_count_h(bucket[i].handle), i))
            f1 = bucket.pop(i1)
            i2 = min(range(len(bucket)),
                     key=lambda i: (store.node_count_h(bucket[i].handle), i))
            f2 = bucket.pop(i2)
            prod = mul_deferred(store, f1, f2)
            res.multiplications += 1
            c = store.node_count_h(prod.handle)
            if c > res.max_multiply_nodes:
                res.max_multiply_nodes = c
            note(prod)
            # deferred normalization lets the running maximum drift; fold the
            # scale out before real-but-remote leaves flush to zero
            if 0.0 < store.max_abs_leaf(prod.handle) < 1e-100:
                prod = store.normalized(prod.handle, prod.log_scale)
            bucket.append(shrink(prod))
        out = sum_out(store, bucket[0], order.order[pos])
        bucket.clear()
        note(out)
        route(shrink(out))

    return res


@dataclass
class AbqRecord:
    """One anytime step; serialized as a single JSON line."""

    k: float
    log10_z: float | None
    mode: str
    heuristic: str
    elapsed_ms: float
    max_intermediate_nodes: int
    status: str = "ok"          # ok | out_of_budget | timeout
    exact: bool = False

    def to_json(self) -> str:
        import json

        d = {
            "k": "inf" if self.k == math.inf else int(self.k),
            "log10_Z": self.log10_z,
            "mode": self.mode,
            "heuristic": self.heuristic,
            "elapsed_ms": round(self.elapsed_ms, 3),
            "max_intermediate_nodes": self.max_intermediate_nodes,
            "status": self.status,
            "exact": self.exact,
        }
        if self.log10_z is None and self.status == "ok":
            d["zero_partition"] = True   # Z == 0 exactly, log undefined
        return json.dumps(d)


def abq_anytime(net: MarkovNet, cfg: QuantizeConfig | None = None, *,
                k_start: float = 2, k_max: float | None = None,
                timeout_s: float | None = None,
                max_nodes: int | None = None,
                order: EliminationOrder | None = None) -> Iterator[AbqRecord]:
    """Doubling schedule k_start, 2*k_start, ... yielding one record per run.

    Stops after an exact run (no quantization fired: larger k cannot change
    anything), at k_max, on timeout, or when the node pool cap is hit; the
    two limit cases yield a final record carrying the failure status.
    """
    if cfg is None:
        cfg = QuantizeConfig()
    if order is None:
        order = minfill_order(primal_graph(net))
    if k_start != math.inf and (int(k_start) != k_start or k_start < 2):
        raise BadParameter("k_start must be an integer >= 2, or inf")
    t0 = time.monotonic()
    deadline = t0 + timeout_s if timeout_s is not None else None
    k = k_start
    while True:
        try:
            r = abq(net, k, cfg, order, deadline=deadline, max_nodes=max_nodes)
        except OutOfBudget:
            yield AbqRecord(k, None, cfg.mode, cfg.heuristic,
                            (time.monotonic() - t0) * 1e3, 0, status="out_of_budget")
            return
        except DeadlineExceeded:
            yield AbqRecord(k, None, cfg.mode, cfg.heuristic,
                            (time.monotonic() - t0) * 1e3, 0, status="timeout")
            return
        yield AbqRecord(
            k,
            None if r.log_z == -math.inf else r.log_z / _LN10,
            cfg.mode, cfg.heuristic,
            (time.monotonic() - t0) * 1e3,
            r.max_intermediate_nodes,
            exact=not r.quantized,
        )
        if not r.quantized:
            return
        if k_max is not None and k >= k_max:
            return
        if deadline is not None and time.monotonic() >= deadline:
            return
        k = k * 2 if k_max is None else min(k * 2, k_max)
