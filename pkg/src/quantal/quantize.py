"""Leaf quantization: shrink a decision diagram by merging close leaf values.

Merging leaf values and re-reducing can only remove nodes, never add them, so
quantization is a size-reduction operator.  Three selection heuristics are
provided:

* min-error: dynamic program over leaf values sorted ascending that finds the
  contiguous partition into l clusters minimizing total weighted error, plus
  a binary search for the largest l whose rebuilt diagram fits the budget.
* min-merge: repeatedly merge the leaf with the fewest parent nodes into the
  leaf sharing the most parents with it, which directly targets node deletion
  during reduction; binary search over the surviving leaf count.
* min-error-merge: run both, keep whichever has the smaller measured error.

Modes pick the cluster representative: "approx" uses the mass-weighted mean
(pairwise mass-weighted midpoint for min-merge), "upper" the cluster max and
"lower" the cluster min, so the quantized function dominates / is dominated
by the original pointwise, which is what turns elimination into a bound.
Zero leaves are never merged with nonzero leaves (determinism structure is
preserved), except at the final fallback where the whole diagram collapses
to one constant because nothing larger fits the budget.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .add import _KL, _SUB, AddStore, ScaledAdd, leaves, node_count, support
from .errors import BadParameter, BadTarget

__all__ = [
    "QuantizeConfig",
    "QuantizationMap",
    "optimal_partition",
    "min_error_quantize",
    "min_merge_quantize",
    "quantize_to_bound",
    "quantization_error",
]

HEURISTICS = ("min-error", "min-merge", "min-error-merge")
MODES = ("approx", "upper", "lower")
MEASURES = ("squared", "kl")

_REL_EPS = 1e-12   # guards |a-b|/max(a,b,eps) tie-breaking


@dataclass(frozen=True)
class QuantizeConfig:
    heuristic: str = "min-error-merge"
    mode: str = "upper"
    node_budget: int = 2
    error_measure: str = "squared"

    def __post_init__(self):
        if self.heuristic not in HEURISTICS:
            raise BadParameter(f"heuristic must be one of {HEURISTICS}")
        if self.mode not in MODES:
            raise BadParameter(f"mode must be one of {MODES}")
        if self.error_measure not in MEASURES:
            raise BadParameter(f"error_measure must be one of {MEASURES}")
        if not isinstance(self.node_budget, int) or self.node_budget < 2:
            raise BadParameter("node_budget must be an integer >= 2")


@dataclass(frozen=True)
class QuantizationMap:
    """Contiguous clusters of sorted leaf values and one representative each."""

    clusters: tuple[tuple[float, ...], ...]
    representatives: tuple[float, ...]
    cost: float

    def value_map(self) -> dict[float, float]:
        out = {}
        for group, rep in zip(self.clusters, self.representatives):
            for v in group:
                out[v] = rep
        return out


# -- weighted-cost machinery -------------------------------------------------
#
# Cluster cost over sorted values w[i..j] with mass fractions m and a
# representative r:
#   squared: sum m*(w - r)^2 = Smw2 - 2r*Smw + r^2*Sm
#   kl:      sum m*w*ln(w/r) = Smwlw - Smw*ln(r)       (0*ln 0 := 0)
# "approx" puts r at the weighted mean Smw/Sm, "upper"/"lower" force the
# cluster max/min.  Everything reduces to prefix sums, so the full t-by-t
# matrix comes out of a few broadcast operations.


def _prefixes(w: np.ndarray, m: np.ndarray):
    def pre(x):
        p = np.zeros(len(x) + 1)
        np.cumsum(x, out=p[1:])
        return p

    with np.errstate(divide="ignore", invalid="ignore"):
        lw = np.where(w > 0.0, np.log(np.where(w > 0.0, w, 1.0)), 0.0)
    return pre(m), pre(m * w), pre(m * w * w), pre(m * w * lw)


def _span(p: np.ndarray) -> np.ndarray:
    # S[i, j] = p[j+1] - p[i]
    t = len(p) - 1
    return p[1:].reshape(1, t) - p[:t].reshape(t, 1)


def _rep_matrix(w, Sm, Smw, mode):
    t = len(w)
    if mode == "upper":
        return np.broadcast_to(w.reshape(1, t), (t, t))
    if mode == "lower":
        return np.broadcast_to(w.reshape(t, 1), (t, t))
    with np.errstate(invalid="ignore"):
        return Smw / Sm


def _cost_matrix(w, m, measure, mode):
    t = len(w)
    pm, pmw, pmw2, pmwlw = _prefixes(w, m)
    Sm, Smw, Smw2, Smwlw = _span(pm), _span(pmw), _span(pmw2), _span(pmwlw)
    R = _rep_matrix(w, Sm, Smw, mode)
    if measure == "squared":
        C = Smw2 - 2.0 * R * Smw + R * R * Sm
        C = np.maximum(C, 0.0)     # cancellation dust
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            lnR = np.log(R)
            C = Smwlw - Smw * lnR
        C = np.where(Smw == 0.0, 0.0, C)   # all-zero cluster, 0*ln 0 := 0
    if t > 1:
        C[np.tril_indices(t, -1)] = np.inf   # i > j never a cluster
    return C


def _dp_layers(C: np.ndarray, l_max: int):
    """D[p, j] = min cost of splitting values 0..j into p clusters; B backpointers."""
    t = C.shape[0]
    D = np.full((l_max + 1, t), np.inf)
    B = np.zeros((l_max + 1, t), dtype=np.int64)
    D[1] = C[0]
    idx = np.arange(t)
    for p in range(2, l_max + 1):
        M = D[p - 1, : t - 1].reshape(t - 1, 1) + C[1:, :]
        am = np.argmin(M, axis=0)
        D[p] = M[am, idx]
        B[p] = am + 1
    return D, B


def _cluster_bounds(B: np.ndarray, l: int, t: int) -> list[tuple[int, int]]:
    out = []
    j = t - 1
    for p in range(l, 0, -1):
        i = int(B[p, j]) if p > 1 else 0
        out.append((i, j))
        j = i - 1
    out.reverse()
    return out


def _rep_of(w, pm, pmw, i, j, mode) -> float:
    if mode == "upper":
        return float(w[j])
    if mode == "lower":
        return float(w[i])
    sm = pm[j + 1] - pm[i]
    return float((pmw[j + 1] - pmw[i]) / sm)


def _fractions(masses) -> np.ndarray:
    tot = sum(masses)
    if tot <= 0:
        raise ValueError("masses must be positive")
    # int/int stays exact for arbitrarily large counts
    return np.array([mm / tot for mm in masses], dtype=float)


def optimal_partition(values, l: int, measure: str = "squared",
                      mode: str = "approx") -> QuantizationMap:
    """Minimum-cost partition of sorted distinct values into l contiguous clusters.

    ``values`` is a sequence of (value, mass) sorted strictly ascending with
    positive masses.  The reported cost uses masses normalized to fractions
    of their total, which leaves the argmin unchanged.
    """
    if measure not in MEASURES:
        raise BadParameter(f"error_measure must be one of {MEASURES}")
    if mode not in MODES:
        raise BadParameter(f"mode must be one of {MODES}")
    w = np.array([float(v) for v, _ in values])
    t = len(w)
    if not 1 <= l <= t:
        raise BadTarget(f"cluster count {l} outside [1, {t}]")
    if np.any(np.diff(w) <= 0.0):
        raise ValueError("values must be sorted strictly ascending")
    m = _fractions([mm for _, mm in values])
    C = _cost_matrix(w, m, measure, mode)
    D, B = _dp_layers(C, l)
    bounds = _cluster_bounds(B, l, t)
    pm, pmw, _, _ = _prefixes(w, m)
    reps = tuple(_rep_of(w, pm, pmw, i, j, mode) for i, j in bounds)
    clusters = tuple(tuple(float(x) for x in w[i: j + 1]) for i, j in bounds)
    return QuantizationMap(clusters, reps, float(D[l, t - 1]))


# -- rebuilding under a value map ---------------------------------------------


def _bottom_up(store: AddStore, h: int) -> list[int]:
    """Reachable nodes ordered leaves-first; children precede parents because
    a child's position is strictly greater than its parent's."""
    nodes = store._nodes
    return sorted(store.reachable(h), key=lambda r: -nodes[r][0])


def _relabel_size(store: AddStore, order: list[int],
                  vmap: dict[float, float]) -> int:
    """Node count of the reduced diagram after mapping leaf values, computed
    by local canonicalization without allocating anything in the store."""
    nodes = store._nodes
    lp = store.leaf_pos
    canon: dict[int, int] = {}
    leaf_ids: dict[float, int] = {}
    triples: dict[tuple[int, int, int], int] = {}
    nid = 0
    for r in order:
        n = nodes[r]
        if n[0] == lp:
            v = vmap.get(n[1], n[1])
            cid = leaf_ids.get(v)
            if cid is None:
                nid += 1
                leaf_ids[v] = cid = nid
            canon[r] = cid
        else:
            hi = canon[n[1]]
            lo = canon[n[2]]
            if hi == lo:
                canon[r] = hi
                continue
            key = (n[0], hi, lo)
            cid = triples.get(key)
            if cid is None:
                nid += 1
                triples[key] = cid = nid
            canon[r] = cid
    return len(leaf_ids) + len(triples)


def _rebuild(store: AddStore, f: ScaledAdd, vmap: dict[float, float],
             order: list[int]) -> ScaledAdd:
    """Relabel leaves through vmap and renormalize in a single pass: the
    mapped maximum is known up front, so the new leaves are written already
    divided by it."""
    lv = store.leaf_masses(f.handle)
    m = 0.0
    for v, _ in lv:
        r = vmap.get(v, v)
        a = r if r >= 0.0 else -r
        if a > m:
            m = a
    if m == 0.0:
        return ScaledAdd(store.zero, 0.0)
    nodes = store._nodes
    lp = store.leaf_pos
    leaf = store.leaf
    internal = store.internal
    memo: dict[int, int] = {}
    for r in order:
        n = nodes[r]
        if n[0] == lp:
            memo[r] = leaf(vmap.get(n[1], n[1]) / m)
        else:
            memo[r] = internal(n[0], memo[n[1]], memo[n[2]])
    return ScaledAdd(memo[f.handle], f.log_scale + math.log(m))


def _collapse_constant(store: AddStore, f: ScaledAdd,
                       mode: str) -> tuple[ScaledAdd, dict[float, float]]:
    """One-cluster fallback: the whole function becomes a constant.

    The only place a zero leaf may merge with nonzero ones; forced whenever
    even a two-leaf diagram cannot fit the budget.
    """
    lv = store.leaf_masses(f.handle)
    if mode == "upper":
        rep = lv[-1][0]
    elif mode == "lower":
        rep = lv[0][0]
    else:
        tot = 1 << len(store.support_h(f.handle))
        rep = sum((mm / tot) * v for v, mm in lv)
    vmap = {v: rep for v, _ in lv}
    if rep == 0.0:
        return ScaledAdd(store.zero, 0.0), vmap
    return ScaledAdd(store.one, f.log_scale + math.log(rep)), vmap


def _search_largest(store: AddStore, f: ScaledAdd, cfg: QuantizeConfig,
                    t_all: int, vmap_for,
                    order: list[int] | None = None) -> tuple[ScaledAdd, dict[float, float]]:
    """Largest l in [1, t_all] whose relabeled diagram fits the budget.

    Size is assumed monotone nonincreasing as l shrinks; l=1 is a single
    constant node, so the search always lands somewhere.  Probes measure
    size without building; any l with 2l-1 over budget is skipped outright
    (l leaves force at least l-1 internal nodes).  Only the winner is
    materialized.  Returns the result and the leaf value map behind it.
    """
    k = cfg.node_budget
    if order is None:
        order = _bottom_up(store, f.handle)
    lo, hi = 1, min(t_all, (k + 1) // 2)
    best_l, best_vm = None, None
    while lo <= hi:
        mid = (lo + hi) // 2
        if mid == 1:
            ok, vm = True, None
        else:
            vm = vmap_for(mid)
            ok = vm is not None and _relabel_size(store, order, vm) <= k
        if ok:
            best_l, best_vm = mid, vm
            lo = mid + 1
        else:
            hi = mid - 1
    if best_l is None or best_l == 1:
        return _collapse_constant(store, f, cfg.mode)
    return _rebuild(store, f, best_vm, order), best_vm


def _min_error_vq(store: AddStore, f: ScaledAdd, cfg: QuantizeConfig,
                  order: list[int] | None = None) -> tuple[ScaledAdd, dict | None]:
    k = cfg.node_budget
    lv = leaves(store, f)
    t_all = len(lv)
    if t_all <= 1:
        return f, None
    tot = 1 << len(support(store, f))
    zero_present = lv[0][0] == 0.0
    pos = lv[1:] if zero_present else lv
    w = np.array([v for v, _ in pos])
    m = np.array([mm / tot for _, mm in pos])
    layer_cap = min(len(pos), max(1, (k + 1) // 2))
    C = _cost_matrix(w, m, cfg.error_measure, cfg.mode)
    D, B = _dp_layers(C, layer_cap)
    pm, pmw, _, _ = _prefixes(w, m)

    def vmap_for(l_total: int) -> dict[float, float] | None:
        l_pos = l_total - 1 if zero_present else l_total
        if l_pos < 1 or l_pos > layer_cap or l_pos > len(pos):
            return None
        vmap: dict[float, float] = {}
        for i, j in _cluster_bounds(B, l_pos, len(pos)):
            rep = _rep_of(w, pm, pmw, i, j, cfg.mode)
            for idx in range(i, j + 1):
                vmap[float(w[idx])] = rep
        return vmap

    return _search_largest(store, f, cfg, t_all, vmap_for, order)


def min_error_quantize(store: AddStore, f: ScaledAdd, cfg: QuantizeConfig) -> ScaledAdd:
    """Quantize by the optimal contiguous partition of the sorted leaf values.

    Binary search over the cluster count l for the largest diagram within
    cfg.node_budget.  A diagram with l leaves needs at least 2l-1 nodes, so
    layers above (budget+1)//2 are never computed; representative collisions
    could in principle make such an l feasible, which the search then simply
    does not exploit.
    """
    return _min_error_vq(store, f, cfg)[0]


def _min_merge_vq(store: AddStore, f: ScaledAdd, cfg: QuantizeConfig,
                  order: list[int] | None = None) -> tuple[ScaledAdd, dict | None]:
    k = cfg.node_budget
    lv = store.leaf_masses(f.handle)
    t_all = len(lv)
    if t_all <= 1:
        return f, None
    nodes = store._nodes
    lp = store.leaf_pos
    tot = 1 << len(store.support_h(f.handle))
    if order is None:
        order = _bottom_up(store, f.handle)

    vals = [v for v, _ in lv]
    frac = [mm / tot for _, mm in lv]
    cid_of_ref = {store._leaf_table[v]: i for i, v in enumerate(vals)}
    parents: list[set[int]] = [set() for _ in range(t_all)]
    for r in order:
        n = nodes[r]
        if n[0] == lp:
            continue
        for ch in (n[1], n[2]):
            c = cid_of_ref.get(ch)
            if c is not None:
                parents[c].add(r)
    zero_cid = 0 if vals[0] == 0.0 else None

    rep = list(vals)
    mass = list(frac)
    uf = list(range(t_all))

    def find(c: int) -> int:
        while uf[c] != c:
            uf[c] = uf[uf[c]]
            c = uf[c]
        return c

    alive = [True] * t_all
    mergeable = [c for c in range(t_all) if c != zero_cid]
    heap = [(len(parents[c]), rep[c], c) for c in mergeable]
    heapq.heapify(heap)
    live = len(mergeable)
    events: list[tuple[int, int]] = []

    # guard scales with the leaf magnitudes so deferred-normalization inputs
    # (every value possibly hundreds of orders below 1) tie-break the same
    # way their normalized counterparts would
    floor = _REL_EPS * max(abs(vals[0]), abs(vals[-1]))
    if floor == 0.0:
        floor = _REL_EPS

    def reldiff(a: float, b: float) -> float:
        d = a - b if a >= b else b - a
        return d / max(a, b, floor)

    while live >= 2:
        src = None
        while heap:
            cnt, rv, c = heapq.heappop(heap)
            if alive[c] and c != zero_cid and cnt == len(parents[c]) and rv == rep[c]:
                src = c
                break
        if src is None:
            break
        # candidate partners: clusters owning a leaf-child of one of src's
        # parents; union-find roots are alive by construction
        tally: dict[int, int] = {}
        for pnode in parents[src]:
            n = nodes[pnode]
            a = cid_of_ref.get(n[1])
            b = cid_of_ref.get(n[2])
            if a is not None:
                a = find(a)
                if a == src or a == zero_cid:
                    a = None
            if b is not None:
                b = find(b)
                if b == src or b == zero_cid or b == a:
                    b = None
            if a is not None:
                tally[a] = tally.get(a, 0) + 1
            if b is not None:
                tally[b] = tally.get(b, 0) + 1
        best = None
        best_key = None
        if tally:
            for c2 in sorted(tally):
                key = (-tally[c2], reldiff(rep[src], rep[c2]), rep[c2], c2)
                if best_key is None or key < best_key:
                    best, best_key = c2, key
        else:
            for c2 in range(t_all):
                if not alive[c2] or c2 == src or c2 == zero_cid or find(c2) != c2:
                    continue
                key = (0, reldiff(rep[src], rep[c2]), rep[c2], c2)
                if best_key is None or key < best_key:
                    best, best_key = c2, key
        if best is None:
            break
        tgt = best
        nm = mass[src] + mass[tgt]
        if cfg.mode == "upper":
            r = rep[src] if rep[src] >= rep[tgt] else rep[tgt]
        elif cfg.mode == "lower":
            r = rep[src] if rep[src] <= rep[tgt] else rep[tgt]
        else:
            r = (mass[src] * rep[src] + mass[tgt] * rep[tgt]) / nm
        uf[src] = tgt
        alive[src] = False
        if len(parents[src]) > len(parents[tgt]):
            parents[src], parents[tgt] = parents[tgt], parents[src]
        parents[tgt] |= parents[src]
        parents[src] = set()
        rep[tgt] = r
        mass[tgt] = nm
        live -= 1
        heapq.heappush(heap, (len(parents[tgt]), rep[tgt], tgt))
        events.append((src, tgt))

    def vmap_for(l_total: int) -> dict[float, float] | None:
        need = t_all - l_total
        if need > len(events):
            return None
        rep2 = list(vals)
        mass2 = list(frac)
        par2 = list(range(t_all))
        for s, t2 in events[:need]:
            nm = mass2[s] + mass2[t2]
            if cfg.mode == "upper":
                r = rep2[s] if rep2[s] >= rep2[t2] else rep2[t2]
            elif cfg.mode == "lower":
                r = rep2[s] if rep2[s] <= rep2[t2] else rep2[t2]
            else:
                r = (mass2[s] * rep2[s] + mass2[t2] * rep2[t2]) / nm
            par2[s] = t2
            rep2[t2] = r
            mass2[t2] = nm

        def find2(c: int) -> int:
            while par2[c] != c:
                par2[c] = par2[par2[c]]
                c = par2[c]
            return c

        return {vals[c]: rep2[find2(c)] for c in range(t_all)}

    return _search_largest(store, f, cfg, t_all, vmap_for, order)


def min_merge_quantize(store: AddStore, f: ScaledAdd, cfg: QuantizeConfig) -> ScaledAdd:
    """Quantize by structure-guided pairwise merging.

    The merge chain is deterministic: take the live cluster with the fewest
    parent nodes (ties by smallest representative), fold it into the cluster
    sharing the most parents with it (ties by smallest relative difference
    |a-b|/max(a,b,eps), then smallest representative).  Parent sets are
    maintained by union as clusters merge rather than re-derived from a
    rebuilt diagram, trading exactness of the count for probes that never
    allocate.  Binary search over the surviving leaf count starts at about
    half the current leaf count and keeps the largest fit.
    """
    return _min_merge_vq(store, f, cfg)[0]


def _map_error(store: AddStore, f: ScaledAdd, vmap: dict[float, float],
               measure: str) -> float:
    """Average error of relabeling f's leaves through vmap, straight from the
    leaf mass distribution; no diagrams are built."""
    lv = store.leaf_masses(f.handle)
    tot = 1 << len(store.support_h(f.handle))
    if measure == "squared":
        return float(sum((mm / tot) * (v - vmap.get(v, v)) ** 2 for v, mm in lv))
    out = 0.0
    for v, mm in lv:
        if v == 0.0:
            continue
        r = vmap.get(v, v)
        if r == 0.0:
            return math.inf
        out += (mm / tot) * v * math.log(v / r)
    return out


def quantization_error(store: AddStore, f: ScaledAdd, g: ScaledAdd,
                       measure: str = "squared") -> float:
    """Per-assignment average error between f and its quantization g.

    Computed on g rescaled to f's log scale, so candidates with different
    normalization factors compare on equal footing.  squared averages
    (f-g)^2; kl averages f*ln(f/g), +inf when g is 0 somewhere f is not.
    """
    if measure not in MEASURES:
        raise BadParameter(f"error_measure must be one of {MEASURES}")
    gh = store.with_scale(g, f.log_scale)
    op = _SUB if measure == "squared" else _KL
    d = store.apply_raw(op, f.handle, gh)
    lv = store.leaf_masses(d)
    tot = 1 << len(store.support_h(d))
    if measure == "squared":
        return float(sum((mm / tot) * v * v for v, mm in lv))
    return float(sum((mm / tot) * v for v, mm in lv))


def quantize_to_bound(store: AddStore, f: ScaledAdd, cfg: QuantizeConfig) -> ScaledAdd:
    """Shrink f until node_count <= cfg.node_budget; identity when already within.

    The binary searches assume size is monotone in the cluster count, which
    can miss; whenever a pass still exceeds the budget it re-quantizes its
    own output.  Each pass strictly reduces the number of distinct leaves,
    so the loop bottoms out at a single constant at the latest.
    """
    k = cfg.node_budget
    if node_count(store, f) <= k:
        return f

    # the result handle depends only on the input handle and the config, so
    # repeated shrinks of the same function (message loops do this a lot)
    # come out of a memo; the stored scale delta rides on any input scale
    key = (f.handle, cfg.heuristic, cfg.mode, k, cfg.error_measure)
    hit = store.quant_cache.get(key)
    if hit is not None:
        return ScaledAdd(hit[0], f.log_scale + hit[1])

    order = _bottom_up(store, f.handle)

    def run(engine) -> tuple[ScaledAdd, dict | None]:
        g, vm = engine(store, f, cfg, order)
        while node_count(store, g) > k:
            g, _ = engine(store, g, cfg)
            vm = None   # map no longer relates g back to f's leaves
        return g, vm

    if cfg.heuristic == "min-error":
        out = run(_min_error_vq)[0]
    elif cfg.heuristic == "min-merge":
        out = run(_min_merge_vq)[0]
    else:
        ge, vme = run(_min_error_vq)
        gm, vmm = run(_min_merge_vq)
        if ge == gm:
            out = ge
        else:
            de = (_map_error(store, f, vme, cfg.error_measure) if vme is not None
                  else quantization_error(store, f, ge, cfg.error_measure))
            dm = (_map_error(store, f, vmm, cfg.error_measure) if vmm is not None
                  else quantization_error(store, f, gm, cfg.error_measure))
            out = ge if de <= dm else gm
    store.quant_cache[key] = (out.handle, out.log_scale - f.log_scale)
    return out
