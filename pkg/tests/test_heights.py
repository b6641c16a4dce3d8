import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metastate.catalog import chain_graph, ten_minimum_graph
from metastate.errors import GenericityWarning, LandscapeValidationError, NotSimple
from metastate.heights import HeightIndex, communication_height
from metastate.landscape import CriticalPoint, LandscapeGraph

from conftest import random_graph


def brute_minimax(graph, a, b):
    """Enumerate every simple path in the minimum graph; minimize the highest saddle."""
    adj = {m.id: [] for m in graph.minima}
    for s in graph.saddles:
        x, y = graph.targets(s.id)
        adj[x].append((y, s.value))
        adj[y].append((x, s.value))
    best = math.inf

    def walk(node, seen, top):
        nonlocal best
        if top >= best:
            return
        if node == b:
            best = top
            return
        for nxt, h in adj[node]:
            if nxt not in seen:
                walk(nxt, seen | {nxt}, max(top, h))

    walk(a, {a}, -math.inf)
    return best


@given(st.integers(0, 2**32 - 1), st.integers(2, 6), st.integers(0, 4))
def test_kruskal_heights_match_path_enumeration(seed, n, extra):
    g, _ = random_graph(np.random.default_rng(seed), n, extra)
    idx = HeightIndex(g)
    for a in g.minimum_ids():
        for b in g.minimum_ids():
            expected = g.value(a) if a == b else brute_minimax(g, a, b)
            assert idx.pair(a, b) == expected


@given(st.integers(0, 2**32 - 1), st.integers(3, 6))
def test_set_height_is_min_over_pairs_and_symmetric(seed, n):
    rng = np.random.default_rng(seed)
    g, _ = random_graph(rng, n, 2)
    idx = HeightIndex(g)
    ids = g.minimum_ids()
    A = set(rng.choice(ids, size=2, replace=False).tolist())
    B = set(ids) - A
    assert idx.set_height(A, B) == idx.set_height(B, A)
    assert idx.set_height(A, B) == min(brute_minimax(g, a, b) for a in A for b in B)
    assert idx.set_height(A, []) == math.inf


def ten():
    g = ten_minimum_graph().graph
    return g, HeightIndex(g)


def test_depths_on_ten_minimum_chain():
    g, idx = ten()
    assert idx.xi({"m1", "m2", "m3"}) == 4.0
    assert idx.xi({"m5", "m6"}) == 2.0
    assert idx.xi({"m4"}) == 1.0
    assert idx.xi({"m8"}) == 2.0
    assert idx.xi({"m1"}) == 1.0


def test_xi_is_infinite_for_all_global_minima():
    g, idx = ten()
    assert idx.xi(g.global_minima()) == math.inf


def test_level_rejects_non_simple_sets():
    g, idx = ten()
    with pytest.raises(NotSimple):
        idx.xi({"m1", "m4"})


def test_leads_to_follows_strictly_lower_saddles():
    g, idx = ten()
    # s3_4 sits at 3; below that m1..m3 are one cluster
    assert idx.leads_to("s3_4", {"m1"})
    assert idx.leads_to("s3_4", {"m4"})
    assert not idx.leads_to("s3_4", {"m5"})
    # s6_7 at 4 reaches everything below it on both sides
    assert idx.leads_to("s6_7", {"m10"})
    assert idx.leads_to("s6_7", {"m1"})


def test_gate_sets():
    g, idx = ten()
    assert idx.gate_set({"m5", "m6"}, {"m4"}).saddles == {"s4_5"}
    assert not idx.gate_set({"m5", "m6"}, {"m1", "m2", "m3"})
    gs = idx.gate_set({"m1", "m2", "m3"}, {"m7"})
    assert gs.saddles == {"s6_7"} and gs.height == 4.0
    assert idx.gate_set({"m1"}, {"m2"}).saddles == {"s1_2"}
    assert not idx.gate_set({"m1"}, {"m3"})
    with pytest.raises(ValueError):
        idx.gate_set({"m1"}, {"m1"})


def test_module_level_height_uses_cache():
    g, _ = ten()
    assert communication_height(g, "m1", "m10") == 4.0


def test_near_tie_warns():
    spec = chain_graph([0.0, 0.0], [1.0])
    g = spec.graph
    pts = list(g.minima)
    pts[1] = CriticalPoint("m2", 5e-7, "minimum", 1.0)
    g2 = LandscapeGraph(tuple(pts), g.saddles, g.arrows)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        HeightIndex(g2)
    assert any(issubclass(x.category, GenericityWarning) for x in w)


def test_disconnected_graph_is_rejected():
    with pytest.raises(LandscapeValidationError, match="not connected"):
        LandscapeGraph(
            (CriticalPoint("a", 0, "minimum", 1), CriticalPoint("b", 0, "minimum", 1)), (), ())
