import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metastate.ctmc import (
    Ctmc,
    DiscreteMeasure,
    classify,
    hitting_distribution,
    long_run_distribution,
    stationary_within,
    trace_chain,
    transition_matrix,
    transition_probabilities,
)
from metastate.errors import InvalidWeights, StationarityMismatch, TraceIllPosed

from conftest import random_chain, random_probability

seeds = st.integers(0, 2**32 - 1)


def mp_expm(Q, t):
    mpmath.mp.dps = 40
    return np.array(mpmath.expm(mpmath.matrix(Q.tolist()) * t, method="taylor").tolist(), dtype=float)


@pytest.mark.parametrize("t", [0.0, 1e-3, 0.7, 5.0, 60.0])
def test_transition_matrix_matches_high_precision_taylor(rng, t):
    for n in (2, 4, 6):
        c = random_chain(rng, n)
        assert np.allclose(transition_matrix(c, t), mp_expm(c.Q, t), atol=1e-11, rtol=0)


def test_stiff_chain_against_taylor():
    Q = np.array([[-500.0, 500.0, 0.0], [1e-3, -1e-3, 0.0], [0.0, 2.0, -2.0]])
    c = Ctmc(("a", "b", "c"), Q)
    assert np.allclose(transition_matrix(c, 3.0), mp_expm(Q, 3.0), atol=1e-11)


@given(seeds, st.integers(2, 6), st.floats(0.0, 20.0), st.floats(0.0, 20.0))
def test_semigroup_and_stochastic_rows(seed, n, s, t):
    c = random_chain(np.random.default_rng(seed), n)
    Ps, Pt, Pst = transition_matrix(c, s), transition_matrix(c, t), transition_matrix(c, s + t)
    assert np.all(Pst >= -1e-15)
    assert np.allclose(Pst.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(Ps @ Pt, Pst, atol=1e-10)


def test_generator_validation():
    with pytest.raises(ValueError):
        Ctmc(("a", "b"), [[-1.0, 1.0], [1.0, -2.0]])
    with pytest.raises(ValueError):
        Ctmc(("a", "b"), [[1.0, -1.0], [0.0, 0.0]])
    with pytest.raises(ValueError):
        Ctmc(("a", "a"), [[0.0, 0.0], [0.0, 0.0]])


def test_transition_probabilities_moves_a_measure():
    c = Ctmc.from_rates(("a", "b"), {("a", "b"): 2.0, ("b", "a"): 1.0})
    mu = transition_probabilities(c, DiscreteMeasure.delta(c.states, "a"), 0.5)
    # two-state closed form
    pa = 1 / 3 + 2 / 3 * math.exp(-3 * 0.5)
    assert mu["a"] == pytest.approx(pa, abs=1e-14)


def test_hitting_distribution_gamblers_ruin():
    # birth-death walk on 0..4 with up rate 2, down rate 1, absorbed at 0 and 4
    states = tuple(range(5))
    rates = {}
    for i in range(1, 4):
        rates[(i, i + 1)] = 2.0
        rates[(i, i - 1)] = 1.0
    c = Ctmc.from_rates(states, rates)
    law = hitting_distribution(c, 1, [0, 4])
    r = 1 / 2
    p_top = (1 - r) / (1 - r**4)
    assert law[4] == pytest.approx(p_top, abs=1e-14)
    assert law[0] == pytest.approx(1 - p_top, abs=1e-14)


def test_classify_closed_and_transient():
    c = Ctmc.from_rates("abcde", {("a", "b"): 1, ("b", "a"): 1, ("c", "a"): 1, ("c", "d"): 1,
                                  ("d", "e"): 1, ("e", "d"): 2})
    closed, transient = classify(c)
    assert closed == [("a", "b"), ("d", "e")]
    assert transient == ("c",)


def schur_trace(Q, keep):
    """Independent route: exact Schur complement in rational-free high precision."""
    mpmath.mp.dps = 40
    n = Q.shape[0]
    rest = [i for i in range(n) if i not in keep]
    A = mpmath.matrix([[Q[i, j] for j in keep] for i in keep])
    if rest:
        B = mpmath.matrix([[Q[i, j] for j in rest] for i in keep])
        C = mpmath.matrix([[Q[i, j] for j in keep] for i in rest])
        D = mpmath.matrix([[Q[i, j] for j in rest] for i in rest])
        A = A - B * mpmath.inverse(D) * C
    out = np.array(A.tolist(), dtype=float)
    np.fill_diagonal(out, 0.0)
    return out


def test_trace_matches_schur_complement(rng):
    for _ in range(20):
        c = random_chain(rng, 6, irreducible=True)
        keep = sorted(rng.choice(6, size=3, replace=False).tolist())
        tr = trace_chain(c, [c.states[i] for i in keep])
        off = np.array(tr.Q)
        np.fill_diagonal(off, 0.0)
        assert np.allclose(off, schur_trace(c.Q, keep), rtol=1e-10, atol=1e-12)


@given(seeds)
def test_trace_is_idempotent_and_transitive(seed):
    rng = np.random.default_rng(seed)
    c = random_chain(rng, 6, irreducible=True)
    F = [c.states[i] for i in sorted(rng.choice(6, size=4, replace=False))]
    G = F[:2]
    once = trace_chain(c, F)
    assert np.allclose(trace_chain(once, F).Q, once.Q, atol=1e-10)
    assert np.allclose(trace_chain(once, G).Q, trace_chain(c, G).Q, atol=1e-10)


def test_trace_rejects_sets_missing_a_closed_class():
    c = Ctmc.from_rates("abc", {("a", "b"): 1.0})
    with pytest.raises(TraceIllPosed):
        trace_chain(c, ["a", "b"])
    with pytest.raises(TraceIllPosed):
        trace_chain(c, [])


def test_trace_preserves_conditioned_stationary_law(rng):
    c = random_chain(rng, 5, irreducible=True)
    pi = stationary_within(c, c.states).weights
    F = c.states[:3]
    tr = trace_chain(c, F)
    cond = pi[:3] / pi[:3].sum()
    assert np.allclose(cond @ tr.Q, 0.0, atol=1e-10)


def test_stationary_within_weights_and_strict():
    c = Ctmc.from_rates("ab", {("a", "b"): 2.0, ("b", "a"): 1.0})
    assert stationary_within(c, "ab", {"a": 1, "b": 2}, strict=True).weights == pytest.approx([1 / 3, 2 / 3])
    with pytest.raises(StationarityMismatch):
        stationary_within(c, "ab", {"a": 1, "b": 1}, strict=True)
    assert stationary_within(c, "ab", {"a": 1, "b": 1}).weights == pytest.approx([1 / 3, 2 / 3])


@given(seeds, st.integers(2, 6))
def test_long_run_is_limit_of_transition_law(seed, n):
    rng = np.random.default_rng(seed)
    c = random_chain(rng, n, density=0.4)
    mu = DiscreteMeasure(c.states, random_probability(rng, n))
    lim = long_run_distribution(c, mu).aligned(c.states)
    far = transition_probabilities(c, mu, 1e4).aligned(c.states)
    ev = np.linalg.eigvals(c.Q)
    gap = np.min(-ev.real[np.abs(ev) > 1e-9], initial=1.0)
    if gap > 1e-2:  # otherwise t = 1e4 is not yet the limit
        assert np.allclose(lim, far, atol=1e-8)


def test_discrete_measure_validation():
    with pytest.raises(InvalidWeights):
        DiscreteMeasure(("a", "b"), [0.7, 0.7])
    with pytest.raises(InvalidWeights):
        DiscreteMeasure(("a", "b"), [-0.1, 1.1])
    m = DiscreteMeasure.from_dict({"a": 0.25, "b": 0.75})
    assert m.aligned(["b", "c", "a"]).tolist() == [0.75, 0.0, 0.25]
