"""Total-variation profiles of the reduced chains and mixing-time predictions.

On time scale ``theta_p = exp(d_p / eps)`` the diffusion started near a
minimum ``m`` looks like the layer-``p`` reduced chain started from the law
of the first metastable state it reaches (``hitting_law``).  Its TV distance
to the layer's limiting Gibbs weights is the curve ``f_curve``; between two
scales the distance sits on a plateau.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Sequence

import numpy as np

from .ctmc import (
    DiscreteMeasure,
    hitting_distribution,
    long_run_distribution,
    transition_matrix,
    transition_probabilities,
)
from .errors import ConsistencyViolation, InvalidWeights, NotErgodic
from .tree import TreeStructure

CONSISTENCY_TOL = 1e-9


# ---------------------------------------------------------------------------
# TV primitives
# ---------------------------------------------------------------------------
def tv_discrete(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    universe = list(dict.fromkeys(mu.states + nu.states))
    a, b = mu.aligned(universe), nu.aligned(universe)
    return float(min(1.0, 0.5 * np.abs(a - b).sum()))


def tv_conditioned_limit(a: Sequence, nu_limit: Sequence) -> float:
    """Limit TV between a mixture of conditioned measures and the reference.

    ``a[i]`` is the weight the mixture puts on cell ``i`` and ``nu_limit[i]``
    the limiting reference mass of that cell (the rest of the reference mass
    sits outside all cells).  The distance is the total excess of ``a`` over
    ``nu_limit``.  Exact for Fraction inputs.
    """
    a, nu = list(a), list(nu_limit)
    if len(a) != len(nu) or not a:
        raise InvalidWeights("a and nu must have the same positive length")
    exact = all(isinstance(x, (int, Fraction)) for x in a + nu)
    one = Fraction(1) if exact else 1.0
    tol = 0 if exact else 1e-12
    if any(x < 0 for x in a) or abs(sum(a) - one) > tol * len(a):
        raise InvalidWeights("a must be a probability vector")
    if any(not 0 <= x <= 1 for x in nu) or sum(nu) > one + tol * len(nu):
        raise InvalidWeights("nu must be sub-probability masses")
    excess = sum((x - y for x, y in zip(a, nu) if x > y), 0 * one)
    if abs(sum(nu) - one) <= tol * len(nu):
        half_l1 = sum((abs(x - y) for x, y in zip(a, nu)), 0 * one) / 2
        if abs(half_l1 - excess) > (0 if exact else 1e-12):
            raise ConsistencyViolation(f"excess {excess} differs from half L1 {half_l1}")
    return excess


def tv_brute_force(a: Sequence, nu_limit: Sequence) -> Fraction | float:
    """sup over unions of cells (plus the outside cell) of |P(F) - Q(F)|."""
    a = list(a) + [0]
    nu = list(nu_limit) + [1 - sum(nu_limit)]
    best = 0 * a[0]
    for pick in product((0, 1), repeat=len(a)):
        diff = sum((x - y for x, y, k in zip(a, nu, pick) if k), 0 * a[0])
        best = max(best, abs(diff))
    return best


# ---------------------------------------------------------------------------
# layer measures
# ---------------------------------------------------------------------------
def _check_layer(tree: TreeStructure, p: int, allow_top: bool = False) -> None:
    hi = tree.q + 1 if allow_top else tree.q
    if not 1 <= p <= hi:
        raise ValueError(f"layer must be in 1..{hi}, got {p}")


def _top_states(tree: TreeStructure) -> tuple:
    return (tree.top_state,)


def nu_layer(tree: TreeStructure, p: int) -> DiscreteMeasure:
    """Limiting Gibbs weights of the layer-``p`` metastable states."""
    _check_layer(tree, p, allow_top=True)
    if p == tree.q + 1:
        return DiscreteMeasure(_top_states(tree), [1.0])
    V = tree.layer(p).metastable
    w = np.array([tree.nu(M) / tree.nu_star if M <= tree.m_star else 0.0 for M in V])
    return DiscreteMeasure(V, w / w.sum())


def hitting_law(tree: TreeStructure, m: str, p: int) -> DiscreteMeasure:
    """Law over layer-``p`` metastable states of the first one reached from ``m``.

    For ``p = 1`` this is a point mass at ``{m}``; for ``p = q + 1`` a point
    mass at the merged top state.
    """
    _check_layer(tree, p, allow_top=True)
    if p == tree.q + 1:
        return DiscreteMeasure(_top_states(tree), [1.0])
    L = tree.layer(p)
    start = L.state_of(m)
    return hitting_distribution(L.aux_chain, start, L.metastable)


def next_hitting_law(tree: TreeStructure, prev: DiscreteMeasure, p: int) -> DiscreteMeasure:
    """From the layer-``p`` starting law, where the layer-``p`` chain gets absorbed.

    The absorption probabilities into each closed class become weights of
    the merged layer-``p+1`` states.
    """
    L = tree.layer(p)
    v = prev.aligned(L.chain.states)
    members = [M for c in L.classes for M in c]
    out = {}
    for c in L.classes:
        out[frozenset().union(*c)] = 0.0
    for M, x in zip(L.chain.states, v):
        if x == 0:
            continue
        h = hitting_distribution(L.chain, M, members)
        for c in L.classes:
            out[frozenset().union(*c)] += x * sum(h[s] for s in c)
    if p == tree.q:
        return DiscreteMeasure(_top_states(tree), [1.0])
    nxt = tree.layer(p + 1).metastable
    return DiscreteMeasure(nxt, np.array([out.get(B, 0.0) for B in nxt]))


# ---------------------------------------------------------------------------
# curves and plateaus
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class TvCurve:
    layer: int
    start: str
    times: np.ndarray
    values: np.ndarray
    limit_zero: float
    limit_infinity: float

    def rows(self) -> list:
        return [(self.layer, self.start, float(t), float(v)) for t, v in zip(self.times, self.values)]


def curve_limits(tree: TreeStructure, m: str, p: int) -> tuple[float, float]:
    _check_layer(tree, p)
    a = hitting_law(tree, m, p)
    nu = nu_layer(tree, p)
    zero = tv_discrete(a, nu)
    L = tree.layer(p)
    inf_law = long_run_distribution(L.chain, DiscreteMeasure(L.chain.states, a.aligned(L.chain.states)))
    return zero, tv_discrete(inf_law, nu)


def f_curve(tree: TreeStructure, m: str, p: int, grid: Sequence[float]) -> TvCurve:
    """TV between the layer-``p`` chain from ``hitting_law(m, p)`` and ``nu_layer(p)``."""
    _check_layer(tree, p)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be positive and strictly increasing")
    L = tree.layer(p)
    a = hitting_law(tree, m, p)
    a = DiscreteMeasure(L.chain.states, a.aligned(L.chain.states))
    nu = nu_layer(tree, p)
    vals = np.array([tv_discrete(transition_probabilities(L.chain, a, t), nu) for t in grid])
    zero, inf = curve_limits(tree, m, p)
    return TvCurve(p, m, grid, vals, zero, inf)


def plateau(tree: TreeStructure, m: str, p: int, check: bool = True) -> float:
    """TV value held between the scales of layers ``p-1`` and ``p``.

    With ``check`` the value is cross-checked against the long-time limit of
    the layer ``p-1`` curve and against the class-absorption recursion for
    the hitting laws.
    """
    _check_layer(tree, p, allow_top=True)
    value = tv_discrete(hitting_law(tree, m, p), nu_layer(tree, p))
    if check and p >= 2:
        _, inf = curve_limits(tree, m, p - 1)
        if abs(inf - value) > CONSISTENCY_TOL:
            raise ConsistencyViolation(
                f"layer {p - 1} curve from {m} ends at {inf!r} but the layer {p} plateau is {value!r}")
        rec = next_hitting_law(tree, hitting_law(tree, m, p - 1), p - 1)
        direct = hitting_law(tree, m, p)
        if tv_discrete(rec, direct) > CONSISTENCY_TOL:
            raise ConsistencyViolation(f"hitting law recursion fails at layer {p} from {m}")
    return value


def plateau_table(tree: TreeStructure, check: bool = True) -> list:
    """Rows ``(p, m, plateau)`` for every start minimum and p = 1..q+1."""
    rows = []
    for p in range(1, tree.q + 2):
        for m in tree.graph.minimum_ids():
            rows.append((p, m, plateau(tree, m, p, check=check)))
    return rows


# ---------------------------------------------------------------------------
# mixing time of the top chain
# ---------------------------------------------------------------------------
def worst_start_tv(tree: TreeStructure, t: float) -> float:
    L = tree.layer(tree.q)
    nu = nu_layer(tree, tree.q).aligned(L.chain.states)
    P = transition_matrix(L.chain, t)
    return float(np.max(0.5 * np.abs(P - nu[None, :]).sum(axis=1)))


def chain_mixing_time(tree: TreeStructure, delta: float) -> float:
    """First time the top chain is within ``delta`` of its limit from every start."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    L = tree.layer(tree.q)
    if L.n_classes != 1:
        raise NotErgodic(f"top chain has {L.n_classes} closed classes")
    g = lambda t: worst_start_tv(tree, t)  # noqa: E731
    if g(0.0) <= delta:
        return 0.0
    lo, hi = 0.0, 1.0
    while g(hi) > delta:
        lo, hi = hi, 2 * hi
        if hi > 1e300:
            raise NotErgodic("TV does not fall below delta")
    while hi - lo > 1e-10 * hi:
        mid = 0.5 * (lo + hi)
        if g(mid) > delta:
            lo = mid
        else:
            hi = mid
    return hi


def default_grid(tree: TreeStructure, per_decade: int = 60) -> np.ndarray:
    top = max(10.0 * chain_mixing_time(tree, 0.01), 10.0)
    decades = math.log10(top) + 2
    n = max(2, int(math.ceil(decades * per_decade)) + 1)
    return np.logspace(-2, math.log10(top), n)


# ---------------------------------------------------------------------------
# diffusion-level predictions
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class MixingProfile:
    depths: tuple
    deltas: tuple
    epsilons: tuple
    chain_mixing: dict  # delta -> top-chain mixing time
    plateaus: list  # (p, m, value)
    scales: dict  # eps -> [theta_0, theta_1, ..., theta_q]
    predicted: dict  # (eps, delta) -> predicted diffusion mixing time
    separated: dict  # eps -> bool, theta_0 < theta_1 < ... strictly with theta_1 > 1/eps
    eyring_kramers: dict = field(default_factory=dict)  # eps -> expected transition time

    def mixing_rows(self) -> list:
        rows = []
        for d in self.deltas:
            for e in self.epsilons:
                rows.append((d, self.chain_mixing[d], e, self.scales[e][-1], self.predicted[(e, d)]))
        return rows


def two_well_ek_time(tree: TreeStructure, epsilon: float, start: str | None = None) -> float | None:
    """Expected transition time between the wells of a two-minimum landscape."""
    g = tree.graph
    if len(g.minima) != 2 or len(g.saddles) != 1:
        return None
    s = g.saddles[0]
    m1 = g.point(start) if start else max(g.minima, key=lambda m: (m.value, m.id))
    return (2 * math.pi / s.mu_sigma) * math.sqrt(s.neg_saddle_det / m1.hessian_det) \
        * math.exp((s.value - m1.value) / epsilon)


def predict_diffusion(tree: TreeStructure, deltas: Sequence[float], eps_grid: Sequence[float],
                      check: bool = True) -> MixingProfile:
    deltas, eps_grid = tuple(deltas), tuple(eps_grid)
    chain_mix = {d: chain_mixing_time(tree, d) for d in deltas}
    scales, predicted, separated, ek = {}, {}, {}, {}
    for e in eps_grid:
        if not e > 0:
            raise ValueError("epsilon must be positive")
        th = [1.0 / e] + [math.exp(d / e) for d in tree.depths]
        scales[e] = th
        separated[e] = all(a < b for a, b in zip(th, th[1:]))
        for d in deltas:
            predicted[(e, d)] = th[-1] * chain_mix[d]
        t_ek = two_well_ek_time(tree, e)
        if t_ek is not None:
            ek[e] = t_ek
    return MixingProfile(tuple(tree.depths), deltas, eps_grid, chain_mix, plateau_table(tree, check=check),
                         scales, predicted, separated, ek)
