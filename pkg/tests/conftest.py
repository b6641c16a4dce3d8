import numpy as np
import pytest
from hypothesis import settings

from metastate.ctmc import Ctmc
from metastate.landscape import CriticalPoint, LandscapeGraph

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def random_chain(rng, n, density=0.7, scale=3.0, irreducible=False):
    """Random generator; with ``irreducible`` a directed cycle is added."""
    R = rng.exponential(scale, size=(n, n)) * (rng.random((n, n)) < density)
    if irreducible:
        for i in range(n):
            R[i, (i + 1) % n] += rng.exponential(scale) + 0.1
    np.fill_diagonal(R, 0.0)
    np.fill_diagonal(R, -R.sum(axis=1))
    return Ctmc(tuple(f"x{i}" for i in range(n)), R)


def random_probability(rng, n):
    w = rng.exponential(size=n)
    return w / w.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_graph(rng, n, extra):
    """Connected minimum-saddle multigraph with distinct energies."""
    vals = rng.permutation(n)[:n] * 0.37 + rng.random(n) * 0.1
    minima = tuple(CriticalPoint(f"m{i}", float(v), "minimum", 1.0) for i, v in enumerate(vals))
    edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    for _ in range(extra):
        a, b = rng.choice(n, size=2, replace=False)
        edges.append((int(a), int(b)))
    saddles, arrows = [], []
    for k, (a, b) in enumerate(edges):
        h = max(vals[a], vals[b]) + 0.5 + float(rng.random()) * 3 + k * 1e-3
        sid = f"s{k}"
        saddles.append(CriticalPoint(sid, h, "saddle", -1.0, mu_sigma=1.0))
        arrows += [(sid, f"m{a}"), (sid, f"m{b}")]
    return LandscapeGraph(minima, tuple(saddles), tuple(arrows)), edges
