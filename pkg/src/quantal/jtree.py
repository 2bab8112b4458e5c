"""Junction-tree propagation with per-message node budgets.

The tree is built from an elimination order: triangulate by simulating the
elimination, collect the maximal induced cliques, and join them with a
maximum-weight spanning forest on separator sizes (Kruskal).  Cliques made
this way on a chordal graph always admit such a join tree satisfying the
running-intersection property, so projections onto separators are safe.

Messages live in one shared diagram store whose variable order is the same
elimination order, roots eliminated last.  Each directed edge (u, v) holds
one message, initialized to the constant 1.  An iteration is a full inward
sweep to the root of each component followed by the mirrored outward sweep;
convergence is judged on the largest leaf of the difference between a new
message and the one it replaces, both kept max-leaf normalized so the test
is insensitive to scale.

sum-product:   msg = proj( prod(potentials_u) * prod(msgs into u except from v) )
belief-update: msg = proj( prod(potentials_u) * prod(all msgs into u) ) / msg_{v->u}

Intermediate products are re-quantized whenever they outgrow k, exactly as
in bucket elimination; the division result is left alone by default (its
size is bounded by the product's) unless requantize_after_divide is set.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Iterable

from .add import _DIVZ, _SUB, AddStore, ScaledAdd, from_potential, mul_deferred
from .elimination import EliminationOrder, minfill_order
from .errors import BadParameter, DeadlineExceeded
from .model import MarkovNet, primal_graph
from .quantize import QuantizeConfig, quantize_to_bound

__all__ = [
    "JunctionTree",
    "build_junction_tree",
    "IabqConfig",
    "IabqResult",
    "IabqRun",
    "iabq",
]

VARIANTS = ("sum-product", "belief-update")


@dataclass
class JunctionTree:
    cliques: list[frozenset[int]]
    edges: list[tuple[int, int]]                     # clique index pairs, u < v
    neighbors: dict[int, list[int]]                  # sorted adjacency
    separators: dict[tuple[int, int], frozenset[int]]  # keyed both directions
    assignment: list[list[int]]                      # clique -> potential indices
    order: EliminationOrder


def build_junction_tree(net: MarkovNet,
                        order: EliminationOrder | None = None) -> JunctionTree:
    if order is None:
        order = minfill_order(primal_graph(net))
    adj = {v: set(nb) for v, nb in primal_graph(net).items()}

    raw: list[frozenset[int]] = []
    for v in reversed(order.order):
        nb = sorted(adj[v])
        raw.append(frozenset([v, *nb]))
        for i in range(len(nb)):
            for j in range(i + 1, len(nb)):
                adj[nb[i]].add(nb[j])
                adj[nb[j]].add(nb[i])
        for u in nb:
            adj[u].discard(v)
        del adj[v]

    # keep only maximal cliques; among equals the earliest formed survives
    keep = [True] * len(raw)
    for i, c in enumerate(raw):
        for j, d in enumerate(raw):
            if i == j or not keep[i]:
                continue
            if c < d or (c == d and j < i):
                keep[i] = False
                break
    cliques = [c for i, c in enumerate(raw) if keep[i]]

    cand = []
    for i in range(len(cliques)):
        for j in range(i + 1, len(cliques)):
            w = len(cliques[i] & cliques[j])
            if w > 0:
                cand.append((-w, i, j))
    cand.sort()
    parent = list(range(len(cliques)))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges: list[tuple[int, int]] = []
    for nw, i, j in cand:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            edges.append((i, j))
    edges.sort()

    neighbors: dict[int, list[int]] = {i: [] for i in range(len(cliques))}
    separators: dict[tuple[int, int], frozenset[int]] = {}
    for i, j in edges:
        neighbors[i].append(j)
        neighbors[j].append(i)
        sep = cliques[i] & cliques[j]
        separators[(i, j)] = sep
        separators[(j, i)] = sep
    for i in neighbors:
        neighbors[i].sort()

    assignment: list[list[int]] = [[] for _ in cliques]
    for pi, p in enumerate(net.potentials):
        scope = set(p.scope)
        if not cliques:
            break
        home = min(
            (ci for ci, c in enumerate(cliques) if scope <= c),
            key=lambda ci: (len(cliques[ci]), ci),
            default=None,
        )
        if home is None:
            raise BadParameter(f"potential {pi} scope {sorted(scope)} fits no clique")
        assignment[home].append(pi)

    return JunctionTree(cliques, edges, neighbors, separators, assignment, order)


@dataclass(frozen=True)
class IabqConfig:
    variant: str = "sum-product"
    k: float = math.inf
    quantize: QuantizeConfig = QuantizeConfig()
    max_iterations: int = 50
    epsilon: float = 1e-6
    requantize_after_divide: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise BadParameter(f"variant must be one of {VARIANTS}")
        if self.k != math.inf and (int(self.k) != self.k or self.k < 2):
            raise BadParameter("k must be an integer >= 2, or inf")
        if self.max_iterations < 1:
            raise BadParameter("max_iterations must be >= 1")
        if not (self.epsilon > 0):
            raise BadParameter("epsilon must be positive")


@dataclass
class IabqResult:
    marginals: dict[int, tuple[float, float]]
    iterations: int
    converged: bool
    max_message_nodes: int


class IabqRun:
    """Mutable propagation state; drive with iterate() or run()."""

    def __init__(self, net: MarkovNet, tree: JunctionTree | None = None,
                 cfg: IabqConfig | None = None, *, max_nodes: int | None = None):
        if tree is None:
            tree = build_junction_tree(net)
        if cfg is None:
            cfg = IabqConfig()
        self.net = net
        self.tree = tree
        self.cfg = cfg
        self.finite = cfg.k != math.inf
        self.qcfg = (replace(cfg.quantize, node_budget=int(cfg.k))
                     if self.finite else None)
        self.store = AddStore(tree.order.order, max_nodes=max_nodes)
        self.max_message_nodes = 0

        self.potentials: list[list[ScaledAdd]] = []
        for ci in range(len(tree.cliques)):
            self.potentials.append(
                [from_potential(self.store, net.potentials[pi])
                 for pi in tree.assignment[ci]])

        one = ScaledAdd(self.store.one, 0.0)
        self.messages: dict[tuple[int, int], ScaledAdd] = {}
        for i, j in tree.edges:
            self.messages[(i, j)] = one
            self.messages[(j, i)] = one

        # one schedule entry per directed edge: every component swept inward
        # to its root (largest clique, ties to the smallest index), then back
        self.schedule: list[tuple[int, int]] = []
        seen: set[int] = set()
        for start in range(len(tree.cliques)):
            if start in seen:
                continue
            comp = [start]
            seen.add(start)
            qi = 0
            while qi < len(comp):
                u = comp[qi]
                qi += 1
                for w in tree.neighbors[u]:
                    if w not in seen:
                        seen.add(w)
                        comp.append(w)
            root = min(comp, key=lambda c: (-len(tree.cliques[c]), c))
            parent_of: dict[int, int | None] = {root: None}
            stack = [root]
            preorder: list[int] = []
            while stack:
                u = stack.pop()
                preorder.append(u)
                for w in tree.neighbors[u]:
                    if w not in parent_of:
                        parent_of[w] = u
                        stack.append(w)
            inward = [(u, parent_of[u]) for u in reversed(preorder)
                      if parent_of[u] is not None]
            outward = [(v, u) for (u, v) in reversed(inward)]
            self.schedule.extend(inward)
            self.schedule.extend(outward)

    def _shrink(self, sa: ScaledAdd) -> ScaledAdd:
        if self.finite and self.store.node_count_h(sa.handle) > self.cfg.k:
            sa = quantize_to_bound(self.store, sa, self.qcfg)
        return sa

    def _combine(self, factors: Iterable[ScaledAdd],
                 shrink: bool = True) -> ScaledAdd:
        """Product of the factors, smallest diagrams first.

        Multiplication defers leaf renormalization, so the running maximum
        can drift far below 1; once it sinks past 1e-100 the scale is folded
        out to keep distant-but-real leaves from flushing to zero.
        """
        ordered = sorted(factors, key=lambda f: self.store.node_count_h(f.handle))
        prod = ScaledAdd(self.store.one, 0.0)
        for f in ordered:
            prod = mul_deferred(self.store, prod, f)
            m = self.store.max_abs_leaf(prod.handle)
            if 0.0 < m < 1e-100:
                prod = self.store.normalized(prod.handle, prod.log_scale)
            if shrink:
                prod = self._shrink(prod)
        return prod

    def send_message(self, u: int, v: int) -> ScaledAdd:
        tree, store = self.tree, self.store
        incoming = [self.messages[(w, u)] for w in tree.neighbors[u]
                    if self.cfg.variant == "belief-update" or w != v]
        prod = self._combine(self.potentials[u] + incoming)
        c = store.node_count_h(prod.handle)
        if c > self.max_message_nodes:
            self.max_message_nodes = c
        sep = tree.separators[(u, v)]
        h = prod.handle
        for w in sorted(tree.cliques[u] - sep,
                        key=lambda x: store.position[x], reverse=True):
            h = store.sum_raw(h, store.position[w])
        prod = store.normalized(h, prod.log_scale)
        if self.cfg.variant == "belief-update":
            # divide out the message previously received on this edge; a
            # state that message ruled out stays ruled out (x/0 := 0), which
            # quantized or underflowed messages can genuinely produce
            back = self.messages[(v, u)]
            prod = store.normalized(
                store.apply_raw(_DIVZ, prod.handle, back.handle),
                prod.log_scale - back.log_scale)
            if self.cfg.requantize_after_divide:
                prod = self._shrink(prod)
        return prod

    def iterate(self) -> float:
        """One full sweep; returns the largest message change."""
        worst = 0.0
        for u, v in self.schedule:
            old = self.messages[(u, v)]
            new = self.send_message(u, v)
            self.messages[(u, v)] = new
            if new.handle != old.handle:
                d = self.store.apply_raw(_SUB, new.handle, old.handle)
                delta = self.store.max_abs_leaf(d)
                if delta > worst:
                    worst = delta
        return worst

    def run(self, deadline: float | None = None) -> IabqResult:
        converged = False
        iterations = 0
        for _ in range(self.cfg.max_iterations):
            if deadline is not None and time.monotonic() > deadline:
                raise DeadlineExceeded(
                    f"deadline hit after {iterations} iterations")
            iterations += 1
            if self.iterate() < self.cfg.epsilon:
                converged = True
                break
        return IabqResult(self.marginals(), iterations, converged,
                          self.max_message_nodes)

    def belief(self, ci: int) -> ScaledAdd:
        """Potentials times all incoming messages, never quantized."""
        factors = self.potentials[ci] + [self.messages[(w, ci)]
                                         for w in self.tree.neighbors[ci]]
        prod = self._combine(factors, shrink=False)
        return self.store.normalized(prod.handle, prod.log_scale)

    def marginals(self) -> dict[int, tuple[float, float]]:
        store = self.store
        out: dict[int, tuple[float, float]] = {}
        belief_cache: dict[int, ScaledAdd] = {}
        for var in self.net.active_vars:
            homes = [ci for ci, c in enumerate(self.tree.cliques) if var in c]
            ci = min(homes, key=lambda c: (len(self.tree.cliques[c]), c))
            if ci not in belief_cache:
                belief_cache[ci] = self.belief(ci)
            b = belief_cache[ci]
            h = b.handle
            for w in sorted(self.tree.cliques[ci] - {var},
                            key=lambda x: store.position[x], reverse=True):
                h = store.sum_raw(h, store.position[w])
            pos = store.position[var]
            h0 = store.restrict_raw(h, pos, 0)
            h1 = store.restrict_raw(h, pos, 1)
            w0 = store.leaf_value(h0)
            w1 = store.leaf_value(h1)
            tot = w0 + w1
            if tot <= 0.0:
                out[var] = (0.5, 0.5)   # all-zero belief: no information
            else:
                out[var] = (w0 / tot, w1 / tot)
        return out


def iabq(net: MarkovNet, tree: JunctionTree | None = None,
         cfg: IabqConfig | None = None, *,
         max_nodes: int | None = None,
         deadline: float | None = None) -> IabqResult:
    """Build the run, propagate to convergence or max_iterations, read
    marginals from each variable's smallest containing clique."""
    return IabqRun(net, tree, cfg, max_nodes=max_nodes).run(deadline)
