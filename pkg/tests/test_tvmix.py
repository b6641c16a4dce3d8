import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metastate.catalog import chain_graph, double_well, ten_minimum_graph, three_layer_graph, tilted_double_well
from metastate.ctmc import DiscreteMeasure
from metastate.errors import InvalidWeights
from metastate.landscape import graph_of, nu_weight
from metastate.tree import build_tree
from metastate.tvmix import (
    chain_mixing_time,
    curve_limits,
    default_grid,
    f_curve,
    hitting_law,
    next_hitting_law,
    nu_layer,
    plateau,
    plateau_table,
    predict_diffusion,
    tv_brute_force,
    tv_conditioned_limit,
    tv_discrete,
    worst_start_tv,
)


def fractions(draw_ints):
    total = sum(draw_ints)
    return [Fraction(k, total) for k in draw_ints]


@given(st.lists(st.integers(0, 20), min_size=1, max_size=6).filter(lambda v: sum(v) > 0),
       st.lists(st.integers(0, 20), min_size=7, max_size=7), st.integers(0, 30))
def test_conditioned_limit_equals_brute_force_exactly(a_raw, nu_raw, outside):
    n = len(a_raw)
    a = fractions(a_raw)
    nu_ints = nu_raw[:n]
    denom = sum(nu_ints) + outside
    if denom == 0:
        return
    nu = [Fraction(k, denom) for k in nu_ints]
    assert tv_conditioned_limit(a, nu) == tv_brute_force(a, nu)


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=6), st.lists(st.floats(0.01, 1.0), min_size=6,
                                                                          max_size=6))
def test_conditioned_limit_is_half_l1_for_full_reference(a_raw, nu_raw):
    a = np.array(a_raw) / sum(a_raw)
    nu = np.array(nu_raw[: len(a)]) / sum(nu_raw[: len(a)])
    assert tv_conditioned_limit(a, nu) == pytest.approx(0.5 * np.abs(a - nu).sum(), abs=1e-12)


def test_conditioned_limit_rejects_bad_input():
    with pytest.raises(InvalidWeights):
        tv_conditioned_limit([0.5, 0.6], [0.5, 0.5])
    with pytest.raises(InvalidWeights):
        tv_conditioned_limit([1.0], [1.2])
    with pytest.raises(InvalidWeights):
        tv_conditioned_limit([], [])


def test_tv_discrete_on_disjoint_supports():
    assert tv_discrete(DiscreteMeasure(("a",), [1.0]), DiscreteMeasure(("b",), [1.0])) == 1.0


def test_symmetric_two_well_mixing_time_closed_form():
    tree = build_tree(graph_of(double_well()))
    s = tree.graph.saddles[0]
    m = tree.graph.minima[0]
    r = s.mu_sigma / (2 * math.pi * math.sqrt(s.neg_saddle_det)) / nu_weight(m)
    for d in (0.4, 0.1, 0.01):
        assert chain_mixing_time(tree, d) == pytest.approx(math.log(1 / (2 * d)) / (2 * r), rel=1e-9)
    assert chain_mixing_time(tree, 0.5) == 0.0


def test_asymmetric_two_well_mixing_time_closed_form():
    tree = build_tree(chain_graph([0.0, 0.4], [1.0], [2.0, 3.0], [0.8]).graph)
    r = 0.8 / (2 * math.pi * math.sqrt(0.8)) * math.sqrt(3.0)
    for d in (0.5, 0.1, 0.01):
        assert chain_mixing_time(tree, d) == pytest.approx(math.log(1 / d) / r, rel=1e-9)


@pytest.mark.parametrize("delta", [0.3, 0.05])
def test_mixing_time_is_the_first_crossing(delta):
    tree = build_tree(ten_minimum_graph().graph)
    T = chain_mixing_time(tree, delta)
    assert worst_start_tv(tree, T) <= delta
    assert worst_start_tv(tree, T * (1 - 1e-8)) > delta


def test_first_plateau_values():
    tree = build_tree(ten_minimum_graph().graph)
    g = tree.graph
    star = tree.m_star
    nu_star = sum(nu_weight(g.point(m)) for m in star)
    for m in g.minimum_ids():
        expected = 1 - nu_weight(g.point(m)) / nu_star if m in star else 1.0
        assert plateau(tree, m, 1) == pytest.approx(expected, abs=1e-14)
        assert plateau(tree, m, tree.q + 1) == 0.0


def test_hitting_laws_from_transient_minima():
    tree = build_tree(ten_minimum_graph().graph)
    law = hitting_law(tree, "m4", 1)
    assert law[frozenset({"m4"})] == 1.0
    law2 = hitting_law(tree, "m4", 2)
    assert sum(law2.weights) == pytest.approx(1.0)
    # m4 sits between {m1,m2,m3} and {m5,m6}
    support = {M for M, w in zip(law2.states, law2.weights) if w > 0}
    assert support <= {frozenset({"m1", "m2", "m3"}), frozenset({"m5", "m6"})}


@pytest.mark.parametrize("make", [ten_minimum_graph, three_layer_graph])
def test_plateau_table_passes_internal_checks(make):
    tree = build_tree(make().graph)
    rows = plateau_table(tree)
    assert len(rows) == (tree.q + 1) * len(tree.graph.minima)
    assert all(0 <= v <= 1 for _, _, v in rows)


def test_next_hitting_law_matches_direct():
    tree = build_tree(three_layer_graph().graph)
    for m in tree.graph.minimum_ids():
        for p in range(1, tree.q):
            rec = next_hitting_law(tree, hitting_law(tree, m, p), p)
            assert tv_discrete(rec, hitting_law(tree, m, p + 1)) < 1e-12


def test_curve_endpoints_match_limits():
    tree = build_tree(ten_minimum_graph().graph)
    for p in (1, 2, 3):
        c = f_curve(tree, "m5", p, [1e-9, 1e6])
        zero, inf = curve_limits(tree, "m5", p)
        assert c.values[0] == pytest.approx(zero, abs=1e-6)
        assert c.values[-1] == pytest.approx(inf, abs=1e-9)


def test_top_layer_curve_is_nonincreasing():
    tree = build_tree(ten_minimum_graph().graph)
    grid = default_grid(tree, 20)
    for m in tree.graph.minimum_ids():
        v = f_curve(tree, m, tree.q, grid).values
        assert np.all(np.diff(v) <= 1e-12)


def test_f_curve_rejects_bad_grid():
    tree = build_tree(three_layer_graph().graph)
    with pytest.raises(ValueError):
        f_curve(tree, "m1", 1, [1.0, 0.5])
    with pytest.raises(ValueError):
        f_curve(tree, "m1", 9, [1.0])


def test_nu_layer_is_supported_on_global_minima():
    tree = build_tree(ten_minimum_graph().graph)
    for p in range(1, tree.q + 2):
        nu = nu_layer(tree, p)
        for M, w in zip(nu.states, nu.weights):
            if w > 0:
                assert M <= tree.m_star


def test_predict_diffusion_scales():
    tree = build_tree(graph_of(tilted_double_well()))
    prof = predict_diffusion(tree, [0.1], [0.2, 0.05])
    d = tree.depths[0]
    assert prof.predicted[(0.05, 0.1)] == pytest.approx(math.exp(d / 0.05) * chain_mixing_time(tree, 0.1))
    assert prof.separated[0.05] and not prof.separated[0.2]
    assert prof.eyring_kramers[0.05] > prof.eyring_kramers[0.2]
