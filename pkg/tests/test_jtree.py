import math

import numpy as np
import pytest

from quantal.errors import BadParameter
from quantal.jtree import IabqConfig, IabqRun, build_junction_tree, iabq
from quantal.metrics import avg_kl, brute_force
from quantal.model import MarkovNet, Potential, gen_ising
from quantal.quantize import QuantizeConfig

from helpers import loopy_net, random_net, tree_net


def _check_tree_invariants(net, tree):
    n = len(tree.cliques)
    # every potential scope inside its assigned clique; every potential assigned once
    seen = []
    for ci, idxs in enumerate(tree.assignment):
        for pi in idxs:
            assert set(net.potentials[pi].scope) <= tree.cliques[ci]
            seen.append(pi)
    assert sorted(seen) == list(range(len(net.potentials)))
    # edges form a forest over cliques with consistent separators
    assert len(tree.edges) <= n - 1 if n else not tree.edges
    for u, v in tree.edges:
        sep = tree.cliques[u] & tree.cliques[v]
        assert tree.separators[(u, v)] == sep
        assert tree.separators[(v, u)] == sep
        assert v in tree.neighbors[u] and u in tree.neighbors[v]
    # running intersection: for each variable, cliques containing it are connected
    adj = {i: set() for i in range(n)}
    for u, v in tree.edges:
        adj[u].add(v)
        adj[v].add(u)
    for x in range(net.num_vars):
        holding = [i for i in range(n) if x in tree.cliques[i]]
        if not holding:
            continue
        reach = {holding[0]}
        stack = [holding[0]]
        while stack:
            c = stack.pop()
            for nb in adj[c]:
                if nb not in reach and x in tree.cliques[nb]:
                    reach.add(nb)
                    stack.append(nb)
        assert reach == set(holding)


def test_junction_tree_invariants():
    rng = np.random.default_rng(0)
    for _ in range(20):
        net = random_net(int(rng.integers(3, 14)), rng)
        _check_tree_invariants(net, build_junction_tree(net))
    _check_tree_invariants(gen_ising(4, 5.0, 1),
                           build_junction_tree(gen_ising(4, 5.0, 1)))


def test_cliques_are_maximal():
    rng = np.random.default_rng(1)
    for _ in range(20):
        net = random_net(int(rng.integers(3, 12)), rng)
        tree = build_junction_tree(net)
        for i, a in enumerate(tree.cliques):
            for j, b in enumerate(tree.cliques):
                if i != j:
                    assert not a <= b


def test_sum_product_exact_on_trees():
    rng = np.random.default_rng(2)
    for _ in range(25):
        net = tree_net(int(rng.integers(3, 15)), rng)
        want = brute_force(net).marginals
        res = iabq(net)
        assert res.converged
        assert res.iterations <= 2
        assert avg_kl(want, res.marginals) < 1e-9


def test_belief_update_exact_on_loopy():
    rng = np.random.default_rng(3)
    cfg = IabqConfig(variant="belief-update")
    for _ in range(25):
        net = loopy_net(int(rng.integers(4, 13)), rng)
        want = brute_force(net).marginals
        res = iabq(net, cfg=cfg)
        assert res.converged
        assert avg_kl(want, res.marginals) < 1e-8


def test_marginals_normalized_and_keyed_by_variable():
    rng = np.random.default_rng(4)
    net = random_net(10, rng)
    res = iabq(net)
    assert set(res.marginals) == set(range(10))
    for p0, p1 in res.marginals.values():
        assert p0 >= 0 and p1 >= 0
        assert p0 + p1 == pytest.approx(1.0, abs=1e-12)


def test_clique_products_capped_at_finite_k():
    # quantization caps every combined clique product before elimination;
    # max_message_nodes records the largest such product seen
    rng = np.random.default_rng(5)
    for variant in ("sum-product", "belief-update"):
        for k in (2, 4, 8):
            cfg = IabqConfig(variant=variant, k=k,
                             quantize=QuantizeConfig(mode="approx"))
            net = loopy_net(10, rng)
            res = iabq(net, cfg=cfg)
            assert res.max_message_nodes <= k


def test_finite_k_reaches_fixed_point_with_identical_handles():
    rng = np.random.default_rng(6)
    for _ in range(10):
        net = loopy_net(int(rng.integers(5, 11)), rng)
        cfg = IabqConfig(k=8, quantize=QuantizeConfig(mode="approx"))
        run = IabqRun(net, cfg=cfg)
        run.iterate()
        first = dict(run.messages)
        run.iterate()
        for key, msg in run.messages.items():
            assert msg.handle == first[key].handle


def test_zero_belief_falls_back_to_uniform():
    # contradictory hard constraints: every joint state has weight zero
    net = MarkovNet(2, [
        Potential((0, 1), np.array([1.0, 0.0, 0.0, 0.0])),
        Potential((0, 1), np.array([0.0, 0.0, 0.0, 1.0])),
    ])
    res = iabq(net)
    assert res.marginals[0] == (0.5, 0.5)
    assert res.marginals[1] == (0.5, 0.5)


def test_evidence_changes_marginals():
    from quantal.model import apply_evidence
    rng = np.random.default_rng(7)
    net = tree_net(8, rng)
    cond = apply_evidence(net, {0: 1})
    res = iabq(cond)
    want = brute_force(cond).marginals
    assert avg_kl(want, res.marginals) < 1e-9
    assert 0 not in res.marginals


def test_requantize_after_divide_toggle_runs():
    rng = np.random.default_rng(8)
    net = loopy_net(9, rng)
    base = IabqConfig(variant="belief-update", k=8,
                      quantize=QuantizeConfig(mode="approx"))
    on = IabqConfig(variant="belief-update", k=8,
                    quantize=QuantizeConfig(mode="approx"),
                    requantize_after_divide=True)
    r0 = iabq(net, cfg=base)
    r1 = iabq(net, cfg=on)
    for res in (r0, r1):
        for p0, p1 in res.marginals.values():
            assert p0 + p1 == pytest.approx(1.0, abs=1e-12)


def test_config_validation():
    with pytest.raises(BadParameter):
        IabqConfig(variant="max-product")
    with pytest.raises(BadParameter):
        IabqConfig(k=1)
    with pytest.raises(BadParameter):
        IabqConfig(k=2.5)
    with pytest.raises(BadParameter):
        IabqConfig(max_iterations=0)
    with pytest.raises(BadParameter):
        IabqConfig(epsilon=0.0)


def test_max_message_nodes_reported():
    rng = np.random.default_rng(9)
    net = loopy_net(10, rng)
    res = iabq(net)
    assert res.max_message_nodes >= 1
    capped = iabq(net, cfg=IabqConfig(k=4, quantize=QuantizeConfig(mode="approx")))
    assert capped.max_message_nodes >= 1
