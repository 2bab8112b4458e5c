"""Shared generators and slow-but-obvious oracles for the test suite.

Everything here is deliberately dumb: oracles enumerate assignments or
partitions outright so that any disagreement with the library points at the
library.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from quantal.model import MarkovNet, Potential


def random_net(n: int, rng: np.random.Generator, zero_frac: float = 0.2) -> MarkovNet:
    """Mixed unary/pairwise/ternary net with a fraction of hard zeros."""
    pots = []
    for _ in range(int(rng.integers(2, n + 1))):
        v = int(rng.integers(n))
        t = rng.uniform(0.1, 10.0, 2)
        t[rng.random(2) < zero_frac] = 0.0
        pots.append(Potential((v,), t))
    for _ in range(int(rng.integers(n // 2, n + 3))):
        a, b = rng.choice(n, 2, replace=False)
        t = rng.uniform(0.1, 10.0, 4)
        t[rng.random(4) < zero_frac] = 0.0
        pots.append(Potential((int(a), int(b)), t))
    for _ in range(int(rng.integers(1, max(2, n // 3)))):
        sc = rng.choice(n, 3, replace=False)
        t = rng.uniform(0.1, 10.0, 8)
        t[rng.random(8) < zero_frac] = 0.0
        pots.append(Potential(tuple(int(x) for x in sc), t))
    return MarkovNet(n, pots)


def tree_net(n: int, rng: np.random.Generator) -> MarkovNet:
    """Random spanning tree with strictly positive tables."""
    pots = []
    for v in range(1, n):
        u = int(rng.integers(v))
        pots.append(Potential((u, v), rng.uniform(0.1, 10.0, 4)))
    for v in range(n):
        if rng.random() < 0.5:
            pots.append(Potential((v,), rng.uniform(0.1, 10.0, 2)))
    return MarkovNet(n, pots)


def loopy_net(n: int, rng: np.random.Generator) -> MarkovNet:
    """Connected-ish net with cycles and positive tables."""
    pots = [Potential((v,), rng.uniform(0.1, 10.0, 2)) for v in range(n)]
    for _ in range(n + 3):
        a, b = rng.choice(n, 2, replace=False)
        pots.append(Potential((int(a), int(b)), rng.uniform(0.1, 10.0, 4)))
    return MarkovNet(n, pots)


def enumerate_log_z(net: MarkovNet) -> float:
    """ln Z by looping over every assignment; tiny nets only."""
    n = net.num_vars
    best = -math.inf
    acc = 0.0
    vals = []
    for bits in itertools.product((0, 1), repeat=n):
        p = 1.0
        for pot in net.potentials:
            idx = 0
            for v in pot.scope:
                idx = (idx << 1) | bits[v]
            p *= float(pot.table[idx])
        if net.evidence:
            if any(bits[v] != val for v, val in net.evidence.items()):
                p = 0.0
        vals.append(p)
    tot = math.fsum(vals)
    return math.log(tot) if tot > 0.0 else -math.inf


def enumerate_marginals(net: MarkovNet) -> dict[int, tuple[float, float]]:
    """Exact single-variable marginals by full enumeration; tiny nets only."""
    n = net.num_vars
    mass = np.zeros((n, 2))
    for bits in itertools.product((0, 1), repeat=n):
        p = 1.0
        for pot in net.potentials:
            idx = 0
            for v in pot.scope:
                idx = (idx << 1) | bits[v]
            p *= float(pot.table[idx])
        if net.evidence and any(bits[v] != val for v, val in net.evidence.items()):
            p = 0.0
        for v in range(n):
            mass[v, bits[v]] += p
    out = {}
    active = net.active_vars
    for v in active:
        tot = mass[v, 0] + mass[v, 1]
        out[v] = (0.5, 0.5) if tot <= 0.0 else (mass[v, 0] / tot, mass[v, 1] / tot)
    return out


def eval_scaled(store, f, assignment: dict[int, int]) -> float:
    from quantal.add import evaluate
    return evaluate(store, f, assignment)


def function_table(store, f, variables: list[int]) -> np.ndarray:
    """Dense table of a ScaledAdd over the given variables (row-major,
    last variable fastest)."""
    out = np.empty(1 << len(variables))
    for i, bits in enumerate(itertools.product((0, 1), repeat=len(variables))):
        out[i] = eval_scaled(store, f, dict(zip(variables, bits)))
    return out


def contiguous_partitions(t: int, l: int):
    """All ways to split indices 0..t-1 into l contiguous nonempty runs."""
    for cuts in itertools.combinations(range(1, t), l - 1):
        edges = (0,) + cuts + (t,)
        yield [(edges[i], edges[i + 1] - 1) for i in range(l)]


def partition_cost(values, bounds, measure: str, mode: str) -> float:
    """Weighted cost of one contiguous partition; mirrors the documented
    cluster cost definitions with no shared code."""
    w = [v for v, _ in values]
    tot = sum(m for _, m in values)
    m = [mm / tot for _, mm in values]
    cost = 0.0
    for i, j in bounds:
        if mode == "upper":
            r = w[j]
        elif mode == "lower":
            r = w[i]
        else:
            sm = sum(m[x] for x in range(i, j + 1))
            r = (sum(m[x] * w[x] for x in range(i, j + 1)) / sm) if sm > 0 else w[i]
        for x in range(i, j + 1):
            if measure == "squared":
                cost += m[x] * (w[x] - r) ** 2
            else:
                if w[x] == 0.0:
                    continue
                if r == 0.0:
                    return math.inf
                cost += m[x] * w[x] * math.log(w[x] / r)
    return cost


def best_partition_cost(values, l: int, measure: str, mode: str) -> float:
    return min(partition_cost(values, b, measure, mode)
               for b in contiguous_partitions(len(values), l))
