"""Binary Markov networks: data model, UAI text format, evidence, grid generator.

A network is a set of potentials (nonnegative tables) over binary variables
indexed 0..n-1.  The unnormalized distribution is the product of all potential
tables; the partition function Z is its sum over every assignment of the
active (unevidenced) variables.

File format, whitespace-separated tokens, ``#`` starts a comment to end of
line::

    MARKOV
    n
    c_1 ... c_n          (all cardinalities must be 2)
    m
    k v_1 ... v_k        (one scope line per potential)
    ...
    count w_1 ... w_count   (one table block per potential, count = 2**k,
    ...                      last scope variable varies fastest)

Evidence sidecar: ``e`` followed by ``e`` pairs ``var value``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadParameter,
    NegativeValue,
    UaiSyntaxError,
    UnknownVariable,
    UnsupportedArity,
)

__all__ = [
    "Potential",
    "MarkovNet",
    "parse_uai",
    "serialize_uai",
    "parse_evidence",
    "serialize_evidence",
    "apply_evidence",
    "gen_ising",
    "primal_graph",
]


@dataclass(frozen=True)
class Potential:
    """A nonnegative table over a tuple of distinct binary variables.

    ``table`` is flat, row-major with the last scope variable fastest-varying:
    entry index for assignment a is sum(a[scope[j]] << (k-1-j)).
    """

    scope: tuple[int, ...]
    table: np.ndarray

    def __post_init__(self):
        scope = tuple(int(v) for v in self.scope)
        object.__setattr__(self, "scope", scope)
        if len(set(scope)) != len(scope):
            raise ValueError(f"duplicate variable in scope {scope}")
        table = np.asarray(self.table, dtype=float).reshape(-1)
        object.__setattr__(self, "table", table)
        if table.shape[0] != 2 ** len(scope):
            raise ValueError(
                f"table has {table.shape[0]} entries, scope of {len(scope)} "
                f"binary variables needs {2 ** len(scope)}"
            )
        if np.any(np.isnan(table)) or np.any(np.isinf(table)):
            raise ValueError("table entries must be finite")
        if np.any(table < 0.0):
            raise NegativeValue(f"negative table entry in potential over {scope}")

    def value_at(self, assignment) -> float:
        """Table value under a var->{0,1} mapping covering the scope."""
        idx = 0
        for v in self.scope:
            idx = (idx << 1) | int(assignment[v])
        return float(self.table[idx])

    def restrict(self, assignment) -> "Potential":
        """Drop every scope variable mentioned in ``assignment``, fixing its value."""
        hit = [i for i, v in enumerate(self.scope) if v in assignment]
        if not hit:
            return self
        arr = self.table.reshape((2,) * len(self.scope)) if self.scope else self.table
        for i in sorted(hit, reverse=True):
            arr = np.take(arr, int(assignment[self.scope[i]]), axis=i)
        new_scope = tuple(v for v in self.scope if v not in assignment)
        return Potential(new_scope, np.asarray(arr, dtype=float).reshape(-1).copy())


@dataclass
class MarkovNet:
    num_vars: int
    potentials: list[Potential] = field(default_factory=list)
    evidence: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.num_vars < 0:
            raise BadParameter("num_vars must be >= 0")
        for p in self.potentials:
            for v in p.scope:
                if not 0 <= v < self.num_vars:
                    raise ValueError(f"potential scope names undeclared variable {v}")
        for v, val in self.evidence.items():
            if not 0 <= v < self.num_vars:
                raise ValueError(f"evidence names undeclared variable {v}")
            if val not in (0, 1):
                raise ValueError(f"evidence value for {v} must be 0 or 1")

    @property
    def active_vars(self) -> tuple[int, ...]:
        """Variables not fixed by evidence, ascending."""
        return tuple(v for v in range(self.num_vars) if v not in self.evidence)


def _tokens(text: str) -> list[str]:
    # '#' introduces a comment running to end of line
    lines = [ln.split("#", 1)[0] for ln in text.splitlines()]
    return " ".join(lines).split()


class _Cursor:
    def __init__(self, toks: list[str], what: str):
        self.toks = toks
        self.i = 0
        self.what = what

    def next(self) -> str:
        if self.i >= len(self.toks):
            raise UaiSyntaxError(f"unexpected end of {self.what}")
        t = self.toks[self.i]
        self.i += 1
        return t

    def next_int(self, name: str) -> int:
        t = self.next()
        try:
            return int(t)
        except ValueError:
            raise UaiSyntaxError(f"expected integer {name}, got {t!r}") from None

    def next_float(self, name: str) -> float:
        t = self.next()
        try:
            x = float(t)
        except ValueError:
            raise UaiSyntaxError(f"expected number {name}, got {t!r}") from None
        if math.isnan(x) or math.isinf(x):
            raise UaiSyntaxError(f"non-finite {name}: {t!r}")
        return x

    def done(self):
        if self.i != len(self.toks):
            raise UaiSyntaxError(
                f"trailing tokens in {self.what}, starting at {self.toks[self.i]!r}"
            )


def parse_uai(text: str) -> MarkovNet:
    """Parse MARKOV network text.  Raises UaiSyntaxError / UnsupportedArity / NegativeValue."""
    cur = _Cursor(_tokens(text), "network file")
    head = cur.next()
    if head != "MARKOV":
        raise UaiSyntaxError(f"expected MARKOV header, got {head!r}")
    n = cur.next_int("variable count")
    if n < 0:
        raise UaiSyntaxError("negative variable count")
    for i in range(n):
        c = cur.next_int(f"cardinality of variable {i}")
        if c != 2:
            raise UnsupportedArity(f"variable {i} has cardinality {c}, only 2 supported")
    m = cur.next_int("potential count")
    if m < 0:
        raise UaiSyntaxError("negative potential count")
    scopes: list[tuple[int, ...]] = []
    for j in range(m):
        k = cur.next_int(f"scope size of potential {j}")
        if k < 0:
            raise UaiSyntaxError(f"negative scope size in potential {j}")
        scope = []
        for _ in range(k):
            v = cur.next_int(f"scope variable of potential {j}")
            if not 0 <= v < n:
                raise UaiSyntaxError(f"potential {j} references undeclared variable {v}")
            scope.append(v)
        if len(set(scope)) != len(scope):
            raise UaiSyntaxError(f"potential {j} repeats a variable in its scope")
        scopes.append(tuple(scope))
    potentials = []
    for j, scope in enumerate(scopes):
        count = cur.next_int(f"entry count of potential {j}")
        if count != 2 ** len(scope):
            raise UaiSyntaxError(
                f"potential {j} declares {count} entries, scope needs {2 ** len(scope)}"
            )
        vals = []
        for e in range(count):
            x = cur.next_float(f"entry {e} of potential {j}")
            if x < 0.0:
                raise NegativeValue(f"entry {e} of potential {j} is negative")
            vals.append(x)
        potentials.append(Potential(scope, np.array(vals, dtype=float)))
    cur.done()
    return MarkovNet(n, potentials)


def serialize_uai(net: MarkovNet) -> str:
    """Inverse of parse_uai; floats use shortest round-trip repr."""
    out = ["MARKOV", str(net.num_vars), " ".join(["2"] * net.num_vars) if net.num_vars else ""]
    out.append(str(len(net.potentials)))
    for p in net.potentials:
        out.append(" ".join([str(len(p.scope))] + [str(v) for v in p.scope]))
    for p in net.potentials:
        out.append(str(p.table.shape[0]))
        out.append(" ".join(repr(float(x)) for x in p.table))
    return "\n".join(out) + "\n"


def parse_evidence(text: str) -> dict[int, int]:
    """Evidence sidecar: a count followed by that many var/value pairs."""
    cur = _Cursor(_tokens(text), "evidence file")
    e = cur.next_int("evidence count")
    if e < 0:
        raise UaiSyntaxError("negative evidence count")
    ev: dict[int, int] = {}
    for _ in range(e):
        var = cur.next_int("evidence variable")
        val = cur.next_int("evidence value")
        if val not in (0, 1):
            raise UaiSyntaxError(f"evidence value for variable {var} must be 0 or 1")
        if var in ev and ev[var] != val:
            raise UaiSyntaxError(f"conflicting evidence for variable {var}")
        ev[var] = val
    cur.done()
    return ev


def serialize_evidence(ev: dict[int, int]) -> str:
    items = sorted(ev.items())
    return " ".join([str(len(items))] + [f"{v} {x}" for v, x in items]) + "\n"


def apply_evidence(net: MarkovNet, ev: dict[int, int]) -> MarkovNet:
    """Condition the network on an assignment of some active variables.

    Every potential is restricted on its evidenced scope variables and the
    variables leave the active set.  The partition function of the result is
    the unnormalized probability of the evidence under the original network.
    """
    if not ev:
        return net
    active = set(net.active_vars)
    for v, val in ev.items():
        if v not in active:
            raise UnknownVariable(f"variable {v} is not an active variable of this network")
        if val not in (0, 1):
            raise BadParameter(f"evidence value for variable {v} must be 0 or 1")
    pots = [p.restrict(ev) for p in net.potentials]
    merged = dict(net.evidence)
    merged.update({int(v): int(x) for v, x in ev.items()})
    return MarkovNet(net.num_vars, pots, merged)


def gen_ising(n: int, beta: float, seed: int) -> MarkovNet:
    """Random n-by-n grid with attractive/repulsive pairwise couplings.

    Variables are row-major, idx = r*n + c.  Each node gets a unary table
    (g, 1/g) with g ~ U(0,1) clamped to [1e-6, 1]; each grid edge gets
    (t, 1/t, 1/t, t) or its mirror image with probability 1/2, t ~ U(1, beta).
    Draw order: unaries for nodes in row-major order, then for each node in
    row-major order its right edge followed by its down edge.  The stream is
    NumPy's PCG64, so a seed pins the network exactly.
    """
    if n < 1:
        raise BadParameter("grid size must be >= 1")
    if not beta > 1.0:
        raise BadParameter("beta must be > 1")
    rng = np.random.default_rng(seed)
    pots: list[Potential] = []
    for r in range(n):
        for c in range(n):
            g = max(float(rng.uniform(0.0, 1.0)), 1e-6)
            pots.append(Potential((r * n + c,), np.array([g, 1.0 / g])))
    for r in range(n):
        for c in range(n):
            v = r * n + c
            for u in ((v + 1) if c + 1 < n else None, (v + n) if r + 1 < n else None):
                if u is None:
                    continue
                t = float(rng.uniform(1.0, beta))
                mirror = rng.random() < 0.5
                tab = [1.0 / t, t, t, 1.0 / t] if mirror else [t, 1.0 / t, 1.0 / t, t]
                pots.append(Potential((v, u), np.array(tab)))
    return MarkovNet(n * n, pots)


def primal_graph(net: MarkovNet) -> dict[int, set[int]]:
    """Adjacency over active variables: u ~ v iff they share a potential scope."""
    adj: dict[int, set[int]] = {v: set() for v in net.active_vars}
    for p in net.potentials:
        sc = [v for v in p.scope if v in adj]
        for i in range(len(sc)):
            for j in range(i + 1, len(sc)):
                adj[sc[i]].add(sc[j])
                adj[sc[j]].add(sc[i])
    return adj
