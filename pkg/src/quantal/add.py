"""Reduced ordered algebraic decision diagrams with hash-consing.

An AddStore owns an append-only node pool.  Handles are pool indices; a leaf
holds a float, an internal node tests one variable and has hi/lo children
whose positions are strictly deeper.  Reduction is enforced at construction:
no node with hi == lo, no duplicate (position, hi, lo) triple, at most one
leaf per distinct float value.  Within one store, two structurally built
diagrams compute the same function iff they are the same handle.

Functions are carried around as ScaledAdd = (handle, log_scale): the
represented function is exp(log_scale) * handle.  Every public operation
renormalizes so the handle's largest-magnitude leaf is exactly 1.0 (the zero
function is the zero leaf with log_scale 0).  This keeps leaf arithmetic in
[0, 1] while partition functions wander hundreds of orders of magnitude;
scale reconciliation for additive ops pushes exp(smaller - larger) into the
smaller operand's leaves, so it can underflow to 0 only when one operand is
astronomically below the other, never overflow.

A store is single-writer: one algorithm run at a time.  Handles from one
store mean nothing in another.  The apply cache is unbounded within a run;
call clear_caches() between top-level runs if a store is reused.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .errors import DivisionByZero, OutOfBudget, UnorderedVariable
from .model import Potential

__all__ = [
    "ScaledAdd",
    "AddStore",
    "from_potential",
    "constant",
    "apply",
    "sum_out",
    "restrict",
    "support",
    "node_count",
    "leaves",
    "evaluate",
    "to_dot",
]

# op codes; the first six are the public apply() surface
_MUL, _ADD, _SUB, _DIV, _MAX, _MIN = range(6)
_KL = 6            # x*ln(x/y), internal, used by quantization error
_SUM, _RES0, _RES1 = 7, 8, 9   # cache tags for sum-out / restrict
_DIVZ = 10         # division with x/0 := 0: a state the divisor rules out
                   # stays ruled out (message division under quantization)

OP_NAMES = {
    "multiply": _MUL,
    "add": _ADD,
    "subtract": _SUB,
    "divide": _DIV,
    "max": _MAX,
    "min": _MIN,
}
_COMMUTATIVE = (_MUL, _ADD, _MAX, _MIN)


class ScaledAdd(NamedTuple):
    handle: int
    log_scale: float


class AddStore:
    """Node pool plus unique tables and the apply cache for one variable order.

    ``order`` lists variable ids root-first: position 0 is tested at the top,
    the last position sits just above the leaves.
    """

    def __init__(self, order: Iterable[int], max_nodes: int | None = None):
        self.order = tuple(int(v) for v in order)
        self.position = {v: i for i, v in enumerate(self.order)}
        if len(self.position) != len(self.order):
            raise ValueError("duplicate variable in order")
        self.leaf_pos = len(self.order)   # leaves sort below every variable
        self.max_nodes = max_nodes
        self._nodes: list[tuple] = []     # leaf: (leaf_pos, value); internal: (pos, hi, lo)
        self._leaf_table: dict[float, int] = {}
        self._node_table: dict[tuple[int, int, int], int] = {}
        self.apply_cache: dict = {}
        self._scan_cache: dict[int, tuple[int, frozenset[int], float]] = {}
        self._mass_cache: dict[int, list[tuple[float, int]]] = {}
        self.quant_cache: dict = {}   # (handle, cfg fields) -> (handle, scale delta)
        self.zero = self.leaf(0.0)
        self.one = self.leaf(1.0)
        # apply/sum-out recurse once per position
        import sys
        need = 4 * len(self.order) + 500
        if sys.getrecursionlimit() < need:
            sys.setrecursionlimit(need)

    # -- node construction ------------------------------------------------

    def _alloc(self, node: tuple) -> int:
        if self.max_nodes is not None and len(self._nodes) >= self.max_nodes:
            raise OutOfBudget(f"node pool cap of {self.max_nodes} nodes reached")
        self._nodes.append(node)
        return len(self._nodes) - 1

    def leaf(self, value: float) -> int:
        value = float(value)
        if value != value:
            raise ValueError("NaN leaf value")
        if value == 0.0:
            value = 0.0   # fold -0.0 into +0.0 so hashing is by numeric value
        r = self._leaf_table.get(value)
        if r is None:
            r = self._alloc((self.leaf_pos, value))
            self._leaf_table[value] = r
        return r

    def internal(self, pos: int, hi: int, lo: int) -> int:
        if hi == lo:
            return hi
        key = (pos, hi, lo)
        r = self._node_table.get(key)
        if r is None:
            r = self._alloc(key)
            self._node_table[key] = r
        return r

    def is_leaf(self, h: int) -> bool:
        return self._nodes[h][0] == self.leaf_pos

    def leaf_value(self, h: int) -> float:
        n = self._nodes[h]
        if n[0] != self.leaf_pos:
            raise ValueError("not a leaf")
        return n[1]

    def node(self, h: int) -> tuple:
        return self._nodes[h]

    def var_at(self, pos: int) -> int:
        return self.order[pos]

    def __len__(self) -> int:
        return len(self._nodes)

    def clear_caches(self):
        self.apply_cache.clear()
        self._scan_cache.clear()
        self._mass_cache.clear()
        self.quant_cache.clear()

    # -- traversal helpers -------------------------------------------------

    def reachable(self, h: int) -> list[int]:
        seen = {h}
        stack = [h]
        out = []
        nodes = self._nodes
        lp = self.leaf_pos
        while stack:
            r = stack.pop()
            out.append(r)
            n = nodes[r]
            if n[0] != lp:
                for c in (n[1], n[2]):
                    if c not in seen:
                        seen.add(c)
                        stack.append(c)
        return out

    def _scan(self, h: int) -> tuple[int, frozenset[int], float]:
        """(node count, support, max |leaf|) in one cached traversal.

        Size checks, bucket routing and renormalization all interrogate the
        same fresh handle right after it is built; answering them from one
        walk instead of three is a measurable win in message loops.
        """
        info = self._scan_cache.get(h)
        if info is None:
            nodes = self._nodes
            lp = self.leaf_pos
            seen = {h}
            seen_add = seen.add
            stack = [h]
            pop = stack.pop
            count = 0
            sup_pos: set[int] = set()
            m = 0.0
            while stack:
                r = pop()
                count += 1
                n = nodes[r]
                if n[0] == lp:
                    a = n[1] if n[1] >= 0.0 else -n[1]
                    if a > m:
                        m = a
                else:
                    sup_pos.add(n[0])
                    c = n[1]
                    if c not in seen:
                        seen_add(c)
                        stack.append(c)
                    c = n[2]
                    if c not in seen:
                        seen_add(c)
                        stack.append(c)
            order = self.order
            info = (count, frozenset(order[p] for p in sup_pos), m)
            self._scan_cache[h] = info
        return info

    def node_count_h(self, h: int) -> int:
        return self._scan(h)[0]

    def support_h(self, h: int) -> frozenset[int]:
        return self._scan(h)[1]

    def max_abs_leaf(self, h: int) -> float:
        return self._scan(h)[2]

    def leaf_masses(self, h: int) -> list[tuple[float, int]]:
        """(value, mass) per reachable leaf, ascending by value.

        Mass counts full assignments of support(h) reaching the leaf; the
        masses sum to 2**|support| exactly (Python ints, no overflow).  An
        edge that skips d support variables contributes a factor 2**d.
        Cached per handle; callers must not mutate the returned list.
        """
        cached = self._mass_cache.get(h)
        if cached is not None:
            return cached
        nodes = self._nodes
        lp = self.leaf_pos
        reach = self.reachable(h)
        sup_pos = sorted({nodes[r][0] for r in reach if nodes[r][0] != lp})
        rank = {p: i for i, p in enumerate(sup_pos)}
        s = len(sup_pos)
        internals = sorted((r for r in reach if nodes[r][0] != lp),
                           key=lambda r: nodes[r][0])
        # root weight is 1: the root carries the minimal support position
        # (or is a leaf of a constant function with empty support)
        w: dict[int, int] = {h: 1}
        for r in internals:
            pos, hi, lo = nodes[r]
            wr = w[r]
            i = rank[pos]
            for c in (hi, lo):
                cp = nodes[c][0]
                j = rank[cp] if cp != lp else s
                w[c] = w.get(c, 0) + (wr << (j - i - 1))
        out = [(nodes[r][1], w.get(r, 0)) for r in reach if nodes[r][0] == lp]
        out.sort(key=lambda t: t[0])
        self._mass_cache[h] = out
        return out

    def map_leaves(self, h: int, fn) -> int:
        """Rebuild with each leaf value passed through fn; reduction reapplies.

        Children sit at strictly greater positions than their parents, so a
        single pass over the reachable set sorted by descending position
        visits every node after both of its children.
        """
        nodes = self._nodes
        lp = self.leaf_pos
        leaf = self.leaf
        internal = self.internal
        memo: dict[int, int] = {}
        for r in sorted(self.reachable(h), key=lambda x: -nodes[x][0]):
            n = nodes[r]
            if n[0] == lp:
                memo[r] = leaf(fn(n[1]))
            else:
                memo[r] = internal(n[0], memo[n[1]], memo[n[2]])
        return memo[h]

    # -- apply -------------------------------------------------------------

    def apply_raw(self, op: int, a: int, b: int) -> int:
        """Pointwise combination of raw handles; memoized, no scaling."""
        nodes = self._nodes
        cache = self.apply_cache
        internal = self.internal
        leaf = self.leaf
        lp = self.leaf_pos
        zero = self.zero
        one = self.one

        def rec(a: int, b: int) -> int:
            if op == _MUL:
                if a == zero or b == zero:
                    return zero
                if a == one:
                    return b
                if b == one:
                    return a
                if a > b:
                    a, b = b, a
            elif op == _ADD:
                if a == zero:
                    return b
                if b == zero:
                    return a
                if a > b:
                    a, b = b, a
            elif op == _SUB:
                if b == zero:
                    return a
                if a == b:
                    return zero
            elif op == _MAX or op == _MIN:
                if a == b:
                    return a
                if a > b:
                    a, b = b, a
            elif op == _DIV:
                if a == zero:
                    return zero   # 0/x = 0 pointwise, including 0/0
                if b == one:
                    return a
            key = (op, a, b)
            r = cache.get(key)
            if r is not None:
                return r
            na = nodes[a]
            nb = nodes[b]
            pa = na[0]
            pb = nb[0]
            if pa == lp and pb == lp:
                r = leaf(_leaf_op(op, na[1], nb[1]))
            elif pa == pb:
                r = internal(pa, rec(na[1], nb[1]), rec(na[2], nb[2]))
            elif pa < pb:
                r = internal(pa, rec(na[1], b), rec(na[2], b))
            else:
                r = internal(pb, rec(a, nb[1]), rec(a, nb[2]))
            cache[key] = r
            return r

        return rec(a, b)

    def sum_raw(self, h: int, p: int) -> int:
        """Sum over the variable at position p: f[v=0] + f[v=1] pointwise."""
        nodes = self._nodes
        cache = self.apply_cache

        def rec(a: int) -> int:
            pa = nodes[a][0]
            if pa > p:
                # variable absent below this point: both branches coincide
                return self.apply_raw(_ADD, a, a)
            n = nodes[a]
            if pa == p:
                return self.apply_raw(_ADD, n[1], n[2])
            key = (_SUM, p, a)
            r = cache.get(key)
            if r is None:
                r = self.internal(pa, rec(n[1]), rec(n[2]))
                cache[key] = r
            return r

        return rec(h)

    def restrict_raw(self, h: int, p: int, val: int) -> int:
        nodes = self._nodes
        cache = self.apply_cache
        tag = _RES1 if val else _RES0
        child = 1 if val else 2

        def rec(a: int) -> int:
            pa = nodes[a][0]
            if pa > p:
                return a
            n = nodes[a]
            if pa == p:
                return n[child]
            key = (tag, p, a)
            r = cache.get(key)
            if r is None:
                r = self.internal(pa, rec(n[1]), rec(n[2]))
                cache[key] = r
            return r

        return rec(h)

    # -- scaling -----------------------------------------------------------

    def normalized(self, h: int, log_scale: float) -> ScaledAdd:
        """Rescale so the largest-magnitude leaf is exactly 1 (zero fn excepted)."""
        m = self.max_abs_leaf(h)
        if m == 0.0:
            return ScaledAdd(self.zero, 0.0)
        if m == 1.0:
            return ScaledAdd(h, log_scale)
        return ScaledAdd(self.map_leaves(h, lambda w: w / m), log_scale + math.log(m))

    def with_scale(self, f: ScaledAdd, target: float) -> int:
        """Handle of f expressed at scale ``target`` (exp factor into leaves)."""
        if f.handle == self.zero or f.log_scale == target:
            return f.handle
        c = math.exp(f.log_scale - target)
        return self.map_leaves(f.handle, lambda w: w * c)


def _leaf_op(op: int, x: float, y: float) -> float:
    if op == _MUL:
        return x * y
    if op == _ADD:
        return x + y
    if op == _SUB:
        return x - y
    if op == _MAX:
        return x if x >= y else y
    if op == _MIN:
        return x if x <= y else y
    if op == _DIV:
        if y == 0.0:
            if x == 0.0:
                return 0.0
            raise DivisionByZero(f"{x} / 0 in pointwise division")
        return x / y
    if op == _KL:
        if x == 0.0:
            return 0.0      # 0 * ln 0 := 0
        if y == 0.0:
            return math.inf
        return x * math.log(x / y)
    if op == _DIVZ:
        return x / y if y != 0.0 else 0.0
    raise ValueError(f"unknown op {op}")


# -- public operations on scaled diagrams -----------------------------------


def constant(store: AddStore, value: float) -> ScaledAdd:
    value = float(value)
    if value == 0.0:
        return ScaledAdd(store.zero, 0.0)
    return ScaledAdd(store.one, math.log(value))


def from_potential(store: AddStore, p: Potential) -> ScaledAdd:
    """Build the reduced diagram of a potential table, normalized.

    Scope variables are placed at their store positions; the build is
    bottom-up over the table sorted into position order, so equal subtables
    share structure immediately.
    """
    for v in p.scope:
        if v not in store.position:
            raise UnorderedVariable(f"variable {v} has no position in the store order")
    k = len(p.scope)
    if k == 0:
        return constant(store, float(p.table[0]))
    m = float(p.table.max())
    if m == 0.0:
        return ScaledAdd(store.zero, 0.0)
    positions = [store.position[v] for v in p.scope]
    perm = sorted(range(k), key=lambda i: positions[i])
    vals = (p.table.reshape((2,) * k).transpose(perm).reshape(-1)) / m
    handles = [store.leaf(float(x)) for x in vals]
    for d in reversed(range(k)):
        pos = positions[perm[d]]
        handles = [store.internal(pos, handles[i + 1], handles[i])
                   for i in range(0, len(handles), 2)]
    return ScaledAdd(handles[0], math.log(m))


def apply(store: AddStore, op: str, f: ScaledAdd, g: ScaledAdd) -> ScaledAdd:
    """Pointwise multiply/add/subtract/divide/max/min of two scaled diagrams.

    multiply adds log scales; divide subtracts them; the additive ops first
    reconcile scales by pushing exp(difference) into the smaller operand.
    """
    code = OP_NAMES.get(op)
    if code is None:
        raise ValueError(f"unknown op {op!r}, expected one of {sorted(OP_NAMES)}")
    if code == _MUL:
        h = store.apply_raw(_MUL, f.handle, g.handle)
        return store.normalized(h, f.log_scale + g.log_scale)
    if code == _DIV:
        h = store.apply_raw(_DIV, f.handle, g.handle)
        return store.normalized(h, f.log_scale - g.log_scale)
    if f.handle == store.zero:
        s = g.log_scale
    elif g.handle == store.zero:
        s = f.log_scale
    else:
        s = f.log_scale if f.log_scale >= g.log_scale else g.log_scale
    h = store.apply_raw(code, store.with_scale(f, s), store.with_scale(g, s))
    return store.normalized(h, s)


def mul_deferred(store: AddStore, f: ScaledAdd, g: ScaledAdd) -> ScaledAdd:
    """Multiply without renormalizing the leaves.

    Product chains that end in a quantization or a sum_out get their
    normalization there, so paying for a leaf rewrite per factor is wasted
    work.  Leaf magnitudes only shrink under multiplication of normalized
    inputs (max |leaf| <= 1 each side), hence no overflow risk; callers must
    not hand the result to scale-sensitive code without normalizing first.
    """
    s = f.log_scale + g.log_scale
    if f.handle == store.one:
        return ScaledAdd(g.handle, s)
    if g.handle == store.one:
        return ScaledAdd(f.handle, s)
    return ScaledAdd(store.apply_raw(_MUL, f.handle, g.handle), s)


def sum_out(store: AddStore, f: ScaledAdd, var: int) -> ScaledAdd:
    """Marginalize one variable: result(x) = f(x[var=0]) + f(x[var=1]).

    When var is not in the support every value doubles, which the
    normalization folds into log_scale (+ln 2), leaving the handle unchanged.
    """
    p = store.position.get(var)
    if p is None:
        raise UnorderedVariable(f"variable {var} has no position in the store order")
    return store.normalized(store.sum_raw(f.handle, p), f.log_scale)


def restrict(store: AddStore, f: ScaledAdd, var: int, value: int) -> ScaledAdd:
    p = store.position.get(var)
    if p is None:
        raise UnorderedVariable(f"variable {var} has no position in the store order")
    return store.normalized(store.restrict_raw(f.handle, p, 1 if value else 0),
                            f.log_scale)


def support(store: AddStore, f: ScaledAdd) -> frozenset[int]:
    return store.support_h(f.handle)


def node_count(store: AddStore, f: ScaledAdd) -> int:
    """Total reachable nodes, internal plus leaves."""
    return store.node_count_h(f.handle)


def leaves(store: AddStore, f: ScaledAdd) -> list[tuple[float, int]]:
    """(value, assignment mass) per leaf, ascending by value."""
    return store.leaf_masses(f.handle)


def evaluate(store: AddStore, f: ScaledAdd, assignment: Mapping[int, int]) -> float:
    """exp(log_scale) times the leaf reached under the assignment."""
    nodes = store._nodes
    lp = store.leaf_pos
    h = f.handle
    n = nodes[h]
    while n[0] != lp:
        h = n[1] if assignment[store.order[n[0]]] else n[2]
        n = nodes[h]
    return math.exp(f.log_scale) * n[1]


def to_dot(store: AddStore, f: ScaledAdd, name: str = "add") -> str:
    """Graphviz text: ovals test variables, boxes hold leaf values,
    solid edge = hi (variable true), dashed edge = lo."""
    lines = [f"digraph {name} {{",
             f'  label="log_scale = {f.log_scale!r}";']
    nodes = store._nodes
    lp = store.leaf_pos
    for r in sorted(store.reachable(f.handle)):
        n = nodes[r]
        if n[0] == lp:
            lines.append(f'  n{r} [shape=box, label="{n[1]!r}"];')
        else:
            lines.append(f'  n{r} [shape=oval, label="x{store.order[n[0]]}"];')
            lines.append(f"  n{r} -> n{n[1]} [style=solid];")
            lines.append(f"  n{r} -> n{n[2]} [style=dashed];")
    lines.append("}")
    return "\n".join(lines) + "\n"
