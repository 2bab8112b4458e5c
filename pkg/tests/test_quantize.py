import itertools
import math

import numpy as np
import pytest

from quantal.add import AddStore, ScaledAdd, apply, evaluate, from_potential, node_count
from quantal.errors import BadParameter, BadTarget
from quantal.model import Potential
from quantal.quantize import (MODES, MEASURES, QuantizeConfig,
                              min_error_quantize, min_merge_quantize,
                              optimal_partition, quantization_error,
                              quantize_to_bound)

from helpers import best_partition_cost, function_table


def rand_values(rng, t):
    """Strictly ascending positive values with integer masses."""
    vals = np.sort(rng.uniform(0.05, 10.0, t))
    while np.any(np.diff(vals) <= 0):
        vals = np.sort(rng.uniform(0.05, 10.0, t))
    masses = rng.integers(1, 9, t)
    return [(float(v), int(m)) for v, m in zip(vals, masses)]


def test_optimal_partition_matches_exhaustive_search():
    rng = np.random.default_rng(0)
    for t in range(1, 9):
        for _ in range(6):
            values = rand_values(rng, t)
            for l in range(1, t + 1):
                for measure in MEASURES:
                    for mode in MODES:
                        got = optimal_partition(values, l, measure, mode)
                        want = best_partition_cost(values, l, measure, mode)
                        assert got.cost == pytest.approx(want, rel=1e-9, abs=1e-12), (
                            t, l, measure, mode)


def test_optimal_partition_structure():
    values = [(1.0, 1), (2.0, 1), (10.0, 2)]
    m = optimal_partition(values, 2, "squared", "approx")
    assert m.clusters == ((1.0, 2.0), (10.0,))
    assert m.representatives[0] == pytest.approx(1.5)
    assert m.representatives[1] == pytest.approx(10.0)
    vm = m.value_map()
    assert vm[1.0] == vm[2.0] == pytest.approx(1.5)

    up = optimal_partition(values, 2, "squared", "upper")
    assert up.representatives == (2.0, 10.0)
    lo = optimal_partition(values, 2, "squared", "lower")
    assert lo.representatives == (1.0, 10.0)


def test_optimal_partition_validates():
    values = [(1.0, 1), (2.0, 1)]
    with pytest.raises(BadTarget):
        optimal_partition(values, 3)
    with pytest.raises(BadTarget):
        optimal_partition(values, 0)
    with pytest.raises(BadParameter):
        optimal_partition(values, 1, measure="huber")
    with pytest.raises(ValueError):
        optimal_partition([(2.0, 1), (1.0, 1)], 1)


def test_quantize_config_validates():
    with pytest.raises(BadParameter):
        QuantizeConfig(heuristic="best-effort")
    with pytest.raises(BadParameter):
        QuantizeConfig(mode="sideways")
    with pytest.raises(BadParameter):
        QuantizeConfig(node_budget=1)
    with pytest.raises(BadParameter):
        QuantizeConfig(error_measure="l1")


def rand_factor(store, rng, nvars=6, arity=3):
    scope = tuple(int(v) for v in rng.choice(nvars, arity, replace=False))
    t = rng.uniform(0.0, 10.0, 1 << arity)
    t[rng.random(1 << arity) < 0.2] = 0.0
    return from_potential(store, Potential(scope, t))


def test_budget_and_shrink_properties():
    rng = np.random.default_rng(1)
    for trial in range(200):
        store = AddStore(range(6))
        f = rand_factor(store, rng)
        g = rand_factor(store, rng)
        h = apply(store, "multiply", f, g)
        k = int(rng.integers(2, 40))
        cfg = QuantizeConfig(heuristic=str(rng.choice(
            ("min-error", "min-merge", "min-error-merge"))),
            mode=str(rng.choice(MODES)), node_budget=k,
            error_measure=str(rng.choice(MEASURES)))
        q = quantize_to_bound(store, h, cfg)
        assert node_count(store, q) <= k
        assert node_count(store, q) <= node_count(store, h)


def test_upper_lower_dominate_pointwise():
    rng = np.random.default_rng(2)
    vars6 = list(range(6))
    for trial in range(60):
        store = AddStore(vars6)
        f = rand_factor(store, rng)
        g = rand_factor(store, rng)
        h = apply(store, "multiply", f, g)
        t = function_table(store, h, vars6)
        k = int(rng.integers(2, 20))
        for heuristic in ("min-error", "min-merge", "min-error-merge"):
            up = quantize_to_bound(store, h, QuantizeConfig(
                heuristic=heuristic, mode="upper", node_budget=k))
            lo = quantize_to_bound(store, h, QuantizeConfig(
                heuristic=heuristic, mode="lower", node_budget=k))
            tu = function_table(store, up, vars6)
            tl = function_table(store, lo, vars6)
            assert np.all(tu >= t * (1 - 1e-12) - 1e-300)
            assert np.all(tl <= t * (1 + 1e-12) + 1e-300)


def test_zeros_survive_quantization():
    # zero leaves may never blend with nonzero ones unless the whole diagram
    # collapses to a constant
    rng = np.random.default_rng(3)
    for trial in range(60):
        store = AddStore(range(6))
        h = apply(store, "multiply", rand_factor(store, rng),
                  rand_factor(store, rng))
        if h.handle == store.zero:
            continue
        t = function_table(store, h, list(range(6)))
        if not (t == 0).any():
            continue
        k = int(rng.integers(4, 24))
        q = quantize_to_bound(store, h, QuantizeConfig(
            heuristic="min-error-merge", mode="lower", node_budget=k))
        tq = function_table(store, q, list(range(6)))
        assert np.all(tq[t == 0.0] == 0.0)
        if node_count(store, q) > 1:
            assert np.all(tq[t > 0.0] > 0.0)


def test_identity_when_within_budget():
    store = AddStore(range(3))
    f = from_potential(store, Potential((0, 1), np.array([1.0, 2.0, 3.0, 4.0])))
    q = quantize_to_bound(store, f, QuantizeConfig(node_budget=64))
    assert q == f


def test_collapse_to_constant_when_budget_tiny():
    store = AddStore(range(4))
    t = np.arange(1.0, 17.0)
    f = from_potential(store, Potential((0, 1, 2, 3), t))
    up = quantize_to_bound(store, f, QuantizeConfig(mode="upper", node_budget=2))
    assert node_count(store, up) == 1
    # upper collapse keeps the maximum: constant 16 at original scale
    assert evaluate(store, up, {0: 0, 1: 0, 2: 0, 3: 0}) == pytest.approx(16.0)
    lo = quantize_to_bound(store, f, QuantizeConfig(mode="lower", node_budget=2))
    assert evaluate(store, lo, {0: 1, 1: 1, 2: 1, 3: 1}) == pytest.approx(1.0)


def test_min_error_beats_or_ties_min_merge_when_combined():
    rng = np.random.default_rng(4)
    for trial in range(40):
        store = AddStore(range(6))
        h = apply(store, "multiply", rand_factor(store, rng),
                  rand_factor(store, rng))
        if node_count(store, h) <= 8:
            continue
        cfg_e = QuantizeConfig(heuristic="min-error", mode="approx", node_budget=8)
        cfg_m = QuantizeConfig(heuristic="min-merge", mode="approx", node_budget=8)
        cfg_b = QuantizeConfig(heuristic="min-error-merge", mode="approx", node_budget=8)
        qe = quantize_to_bound(store, h, cfg_e)
        qm = quantize_to_bound(store, h, cfg_m)
        qb = quantize_to_bound(store, h, cfg_b)
        de = quantization_error(store, h, qe)
        dm = quantization_error(store, h, qm)
        db = quantization_error(store, h, qb)
        assert db <= de + 1e-12 and db <= dm + 1e-12


def test_quantization_error_oracle():
    store = AddStore(range(2))
    f = from_potential(store, Potential((0, 1), np.array([1.0, 2.0, 3.0, 4.0])))
    g = from_potential(store, Potential((0, 1), np.array([1.0, 2.0, 3.5, 3.5])))
    # measured in f's normalized units: both tables divided by exp(log_scale)=4
    tf = np.array([1.0, 2.0, 3.0, 4.0]) / 4.0
    tg = np.array([1.0, 2.0, 3.5, 3.5]) / 4.0
    want = float(np.mean((tf - tg) ** 2))
    assert quantization_error(store, f, g, "squared") == pytest.approx(want)
    want_kl = float(np.mean(tf * np.log(tf / tg)))
    assert quantization_error(store, f, g, "kl") == pytest.approx(want_kl)


def test_deterministic_across_repeats():
    rng = np.random.default_rng(5)
    store = AddStore(range(6))
    h = apply(store, "multiply", rand_factor(store, rng), rand_factor(store, rng))
    cfg = QuantizeConfig(node_budget=6)
    first = quantize_to_bound(store, h, cfg)
    for _ in range(5):
        assert quantize_to_bound(store, h, cfg) == first
    # a fresh store (no memo) must reproduce the same function
    store2 = AddStore(range(6))
    again_in = ScaledAdd(_copy(store, store2, h.handle), h.log_scale)
    again = quantize_to_bound(store2, again_in, cfg)
    t1 = function_table(store, first, list(range(6)))
    t2 = function_table(store2, again, list(range(6)))
    np.testing.assert_allclose(t1, t2, rtol=0, atol=0)


def _copy(src, dst, h):
    memo = {}
    for r in sorted(src.reachable(h), key=lambda x: -src.node(x)[0]):
        n = src.node(r)
        if src.is_leaf(r):
            memo[r] = dst.leaf(n[1])
        else:
            memo[r] = dst.internal(n[0], memo[n[1]], memo[n[2]])
    return memo[h]
