import numpy as np
import pytest
from hypothesis import given

from srmp import instances
from srmp.graph import Factor, NodeSet, build_graph, close_under_intersections
from srmp.schedule import (
    cmp_weights,
    compute_pass_sets,
    factor_sort_key,
    in_plus_weights,
    order_factors,
    srmp_weights,
)

from strategies import small_models


def scopes(g, fs):
    return [g.scope(f) for f in fs]


def edge_scopes(g, es):
    return {(g.scope(g.edges[e][0]), g.scope(g.edges[e][1])) for e in es}


def test_order_2x2_grid():
    g = instances.grid(np.random.default_rng(0), 2, 2)
    assert scopes(g, order_factors(g, which="all")) == [(0,), (0, 1), (0, 2), (1,), (1, 3), (2,), (2, 3), (3,)]
    assert scopes(g, order_factors(g)) == [(0,), (1,), (2,), (3,)]
    assert scopes(g, order_factors(g, which="parents")) == [(0, 1), (0, 2), (1, 3), (2, 3)]


def test_sort_key_rules():
    rank = list(range(6))
    assert factor_sort_key((1, 3), rank) < factor_sort_key((1, 5), rank)
    assert factor_sort_key((0, 2, 5), rank) < factor_sort_key((0, 3, 5), rank)
    # a node order permutes ranks
    assert factor_sort_key((1, 5), [0, 1, 2, 9, 4, 3]) < factor_sort_key((1, 3), [0, 1, 2, 9, 4, 3])


def test_node_order_must_be_permutation():
    g = instances.two_node_example()
    with pytest.raises(ValueError):
        order_factors(g, [0, 0])
    assert scopes(g, order_factors(g, [1, 0])) == [(1,), (0,)]


def test_chain_pass_sets():
    g = instances.chain(np.random.default_rng(0), 3)
    sched = compute_pass_sets(g, order_factors(g))
    b = g.index[(1,)]
    assert edge_scopes(g, sched.in_fw[b]) == {((1, 2), (1,))}
    assert edge_scopes(g, sched.in_bw[b]) == {((0, 1), (1,))}
    last = g.index[(2,)]
    assert sched.in_fw[last] == ()


def _stereo_like():
    fs = [Factor((v,), np.zeros(2)) for v in range(4)]
    fs += [Factor((0, 1, 2), np.zeros(8)), Factor((0, 1, 3), np.zeros(8))]
    return close_under_intersections(build_graph(NodeSet((2,) * 4), fs, "maximal"))


def test_triple_parents_decide_membership_by_other_children():
    g = _stereo_like()
    sched = compute_pass_sets(g, order_factors(g))
    b = g.index[(0, 1)]
    # both triples have a later singleton child ({2} and {3}), so both edges are forward
    assert edge_scopes(g, sched.in_fw[b]) == {((0, 1, 2), (0, 1)), ((0, 1, 3), (0, 1))}
    assert sched.in_bw[b] == ()
    assert edge_scopes(g, sched.out_fw[b]) == {((0, 1), (1,))}
    w = srmp_weights(g, sched, "forward")[b]
    assert w.edge_weights == (1 / 3, 1 / 3) and abs(w.residual - 1 / 3) < 1e-15


def test_grid_interior_weight_half():
    g = instances.grid(np.random.default_rng(0), 3, 3)
    sched = compute_pass_sets(g, order_factors(g))
    b = g.index[(4,)]
    for direction in ("forward", "backward"):
        w = srmp_weights(g, sched, direction)[b]
        assert sorted(w.edge_weights) == [0.0, 0.0, 0.5, 0.5]
        assert w.residual == 0.0


def test_chain_interior_weight_one():
    g = instances.chain(np.random.default_rng(0), 5)
    sched = compute_pass_sets(g, order_factors(g))
    w = srmp_weights(g, sched, "forward")[g.index[(2,)]]
    assert sorted(w.edge_weights) == [0.0, 1.0] and w.residual == 0.0
    # the last node has nothing later: pure collection
    w = srmp_weights(g, sched, "forward")[g.index[(4,)]]
    assert w.edge_weights == (0.0,) and w.residual == 1.0


def test_cmp_weights():
    g = instances.grid(np.random.default_rng(0), 3, 3)
    w = cmp_weights(g)
    assert w[g.index[(4,)]].edge_weights == (0.2,) * 4 and abs(w[g.index[(4,)]].residual - 0.2) < 1e-15
    chain = instances.chain(np.random.default_rng(0), 2)
    w = cmp_weights(chain)[chain.index[(0,)]]
    assert w.edge_weights == (0.5,) and w.residual == 0.5


def test_in_plus_weights_keep_no_mass():
    g = instances.grid(np.random.default_rng(0), 3, 3)
    sched = compute_pass_sets(g, order_factors(g))
    w = in_plus_weights(g, sched, "forward")[g.index[(0,)]]
    assert sorted(w.edge_weights) == [0.5, 0.5] and w.residual == 0.0


def test_direction_is_validated():
    g = instances.two_node_example()
    sched = compute_pass_sets(g, order_factors(g))
    with pytest.raises(ValueError):
        srmp_weights(g, sched, "sideways")


def test_single_child_factor_is_rejected():
    g = build_graph(NodeSet((2, 2)), [Factor((0, 1), np.zeros(4)), Factor((0,), np.zeros(2))], "maximal")
    with pytest.raises(ValueError, match="single child"):
        compute_pass_sets(g, order_factors(g))


@given(small_models(max_nodes=6))
def test_pass_set_and_weight_invariants(g):
    sched = compute_pass_sets(g, order_factors(g))
    for b in sched.order:
        fw, bw = set(sched.in_fw[b]), set(sched.in_bw[b])
        assert fw | bw == set(g.in_edges[b])
        if g.is_pairwise():
            assert not fw & bw
        for direction, plus in (("forward", fw), ("backward", bw)):
            w = srmp_weights(g, sched, direction)[b]
            assert abs(sum(w.edge_weights) + w.residual - 1) <= 1e-12 and w.residual >= 0
            for e, wk in zip(g.in_edges[b], w.edge_weights):
                assert (wk > 0) == (e in plus)
