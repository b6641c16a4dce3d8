"""Built-in landscapes used by the examples and the test-suite."""
from __future__ import annotations

import math

from .landscape import CriticalPoint, LandscapeGraph, Potential, PotentialSpec

TWO_PI = 2 * math.pi


def double_well(box=(-2.5, 2.5), grid: int | None = None) -> PotentialSpec:
    """U = x^4/4 - x^2/2: minima at +-1 (U = -1/4), saddle at 0."""
    pot = Potential.from_expressions(1, "x**4/4 - x**2/2", grad="x**3 - x")
    return PotentialSpec("analytic-1d", potential=pot, box=(tuple(box),), grid=grid, name="double-well")


def tilted_double_well(tilt: float = 0.1, box=(-2.5, 2.5), grid: int | None = None) -> PotentialSpec:
    """U = x^4/4 - x^2/2 + tilt*x; for tilt > 0 the right well is the shallow one."""
    pot = Potential.from_expressions(1, f"x**4/4 - x**2/2 + {tilt!r}*x", grad=f"x**3 - x + {tilt!r}")
    return PotentialSpec("analytic-1d", potential=pot, box=(tuple(box),), grid=grid, name="tilted-double-well")


def quadratic(box=(-8.0, 8.0)) -> PotentialSpec:
    pot = Potential.from_expressions(1, "x**2/2", grad="x")
    return PotentialSpec("analytic-1d", potential=pot, box=(tuple(box),), name="quadratic")


def chain_graph(values_min, values_saddle, hess_min=None, neg_det_saddle=None, name="chain") -> PotentialSpec:
    """Critical graph of a 1D chain m1 - s12 - m2 - s23 - ... .

    Saddles take ``mu_sigma = -det`` as a 1D landscape would.
    """
    n = len(values_min)
    if len(values_saddle) != n - 1:
        raise ValueError("a chain of n minima has n-1 saddles")
    hess_min = hess_min or [1.0] * n
    neg_det_saddle = neg_det_saddle or [1.0] * (n - 1)
    minima = tuple(CriticalPoint(f"m{i + 1}", float(v), "minimum", float(h))
                   for i, (v, h) in enumerate(zip(values_min, hess_min)))
    saddles, arrows = [], []
    for i, (v, h) in enumerate(zip(values_saddle, neg_det_saddle)):
        sid = f"s{i + 1}{i + 2}" if n < 10 else f"s{i + 1}_{i + 2}"
        saddles.append(CriticalPoint(sid, float(v), "saddle", -float(h), neg_saddle_det=float(h), mu_sigma=float(h)))
        arrows += [(sid, f"m{i + 1}"), (sid, f"m{i + 2}")]
    return PotentialSpec("critical-graph", graph=LandscapeGraph(minima, tuple(saddles), tuple(arrows)), name=name)


# Ten wells whose energy orderings give three time scales (depths 1, 2, 4):
# layer 1 has classes {m1,m2,m3}, {m5,m6}, {m8}, {m9,m10} with m4, m7 transient.
TEN_MIN_VALUES = [0.0, 0.0, 0.0, 2.0, 1.0, 1.0, 1.5, 0.0, 0.0, 0.0]
TEN_SADDLE_VALUES = [1.0, 1.0, 3.0, 3.0, 2.0, 4.0, 2.5, 2.0, 1.0]
TEN_HESS = [1.0, 2.0, 1.5, 3.0, 0.8, 1.2, 2.5, 1.0, 0.6, 1.8]
TEN_SADDLE_DET = [0.7, 1.3, 2.0, 0.9, 1.1, 1.6, 0.5, 1.4, 0.8]


def ten_minimum_graph() -> PotentialSpec:
    return chain_graph(TEN_MIN_VALUES, TEN_SADDLE_VALUES, TEN_HESS, TEN_SADDLE_DET, name="ten-minimum")


def three_well_chain() -> PotentialSpec:
    """Wells at a common level, barriers 1.0 then 2.0: two time scales."""
    return chain_graph([0.0, 0.0, 0.0], [1.0, 2.0], [1.0, 2.0, 1.5], [1.0, 0.5], name="three-well")


def three_layer_graph() -> PotentialSpec:
    """Four wells, three time scales (depths 1, 2, 3); m4 is a raised well."""
    return chain_graph([0.0, 0.0, 0.0, 0.5], [1.0, 2.0, 3.5], [1.0, 2.0, 0.5, 1.5], [1.0, 2.0, 0.7],
                       name="three-layer")


CATALOG = {
    "double-well": double_well,
    "tilted-double-well": tilted_double_well,
    "ten-minimum": ten_minimum_graph,
    "three-well": three_well_chain,
    "three-layer": three_layer_graph,
}
