"""Euler-Maruyama ensembles of dx = b(x) dt + sqrt(2 eps) dW and valley statistics.

Every trajectory owns a random stream seeded by ``(seed, trajectory index)``
and draws its Gaussian increments in fixed blocks, so a trajectory's path
does not depend on which other trajectories share its chunk or on how many
worker threads run.  Results are merged by trajectory index.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, stats

from .ctmc import DiscreteMeasure
from .errors import BoundaryHitExcessive, HorizonTooShort, LandscapeValidationError
from .heights import HeightIndex
from .landscape import (
    LandscapeGraph,
    PotentialSpec,
    Valley,
    cell_masses,
    ek_weight,
    graph_of,
    nu_weight,
    valley_of,
)
from .tree import TreeStructure, state_label
from .tvmix import chain_mixing_time

NOISE_BLOCK = 256
CHUNK = 256
MAX_BOUNDARY_FRACTION = 1e-3
TRANSIT = "transit"


def worker_count() -> int:
    try:
        n = int(os.environ.get("METASTATE_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def stiffness_bound(spec: PotentialSpec, graph: LandscapeGraph | None = None) -> float:
    """Largest step allowed: 1% of the fastest relaxation time at the minima."""
    graph = graph or graph_of(spec)
    top = max(float(np.max(np.abs(np.linalg.eigvalsh(spec.potential.hessian(np.array(m.position))))))
              for m in graph.minima)
    return 0.01 / top


@dataclass(frozen=True)
class SimConfig:
    epsilon: float
    dt: float
    horizon: float
    n_traj: int  # per start point
    seed: int
    start_points: tuple
    valley_radius: float | None = None
    level_H: float | None = None
    sample_times: tuple = ()
    target: tuple | None = None  # (center, radius)
    stop_on_hit: bool = False

    def __post_init__(self):
        object.__setattr__(self, "start_points", tuple(tuple(np.atleast_1d(p).astype(float).tolist())
                                                      for p in self.start_points))
        object.__setattr__(self, "sample_times", tuple(float(t) for t in self.sample_times))
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.n_traj < 1:
            raise ValueError("need at least one trajectory")
        if not self.start_points:
            raise ValueError("need at least one start point")
        if any(t < 0 or t > self.horizon * (1 + 1e-12) for t in self.sample_times):
            raise ValueError("sample times must lie in [0, horizon]")
        if not (0 <= self.seed < 2 ** 64):
            raise ValueError("seed must be a 64-bit unsigned integer")

    def validate_for(self, spec: PotentialSpec, graph: LandscapeGraph | None = None) -> None:
        if not spec.analytic:
            raise LandscapeValidationError("simulation needs an analytic landscape")
        bound = stiffness_bound(spec, graph)
        if self.dt > bound * (1 + 1e-9):
            raise ValueError(f"dt = {self.dt} exceeds the stability bound {bound:.6g}")
        P = np.array(self.start_points, dtype=float)
        if P.shape[1] != spec.dim:
            raise ValueError("start points have the wrong dimension")
        if np.any(P < spec.lower()) or np.any(P > spec.upper()):
            raise ValueError("start point outside the bounding box")
        if self.level_H is not None:
            u = spec.potential.value(P)
            if np.any(u > self.level_H + 1e-12):
                raise ValueError(f"start points must satisfy U <= H = {self.level_H}")

    def to_dict(self) -> dict:
        d = {
            "epsilon": self.epsilon, "dt": self.dt, "horizon": self.horizon, "nTraj": self.n_traj,
            "seed": self.seed, "startPoints": [list(p) for p in self.start_points],
            "sampleTimes": list(self.sample_times), "stopOnHit": self.stop_on_hit,
        }
        if self.valley_radius is not None:
            d["valleyRadius"] = self.valley_radius
        if self.level_H is not None:
            d["H"] = self.level_H
        if self.target is not None:
            d["target"] = {"center": list(np.atleast_1d(self.target[0]).astype(float)), "radius": self.target[1]}
        return d


@dataclass(frozen=True, eq=False)
class TrajectoryEnsemble:
    times: np.ndarray  # realized sample times (multiples of dt)
    labels: np.ndarray  # (n_traj, n_times) index into ``owners``; -1 = transit
    owners: tuple  # minimum id per label index
    start_index: np.ndarray  # (n_traj,) which start point
    hit_times: np.ndarray  # (n_traj,), nan if the target was not reached
    boundary_hits: int
    steps: int
    config: SimConfig
    valleys: dict = field(default_factory=dict)

    @property
    def n_traj(self) -> int:
        return len(self.start_index)

    def time_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 0.5 * self.config.dt + 1e-12 * max(1.0, t):
            raise ValueError(f"t = {t} is not a sample time")
        return k


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------
def _labeler(spec: PotentialSpec, valleys: dict, owners: tuple):
    if spec.dim == 1:
        lo = np.array([valleys[m].interval[0] for m in owners])
        hi = np.array([valleys[m].interval[1] for m in owners])

        def label(X):
            x = X[:, :1]
            inside = (x >= lo) & (x <= hi)
            out = np.where(inside.any(axis=1), inside.argmax(axis=1), -1)
            return out.astype(np.int16)
        return label

    def label(X):
        out = np.full(len(X), -1, dtype=np.int16)
        for k, m in enumerate(owners):
            out[(out < 0) & valleys[m].contains(X)] = k
        return out
    return label


def _run_chunk(spec: PotentialSpec, cfg: SimConfig, traj_ids: np.ndarray, x0: np.ndarray,
               sample_steps: np.ndarray, n_steps: int, label) -> tuple:
    d = spec.dim
    n = len(traj_ids)
    rngs = [np.random.default_rng([cfg.seed, int(i)]) for i in traj_ids]
    lo, hi = spec.lower(), spec.upper()
    x = x0.astype(float).copy()
    labels = np.full((n, len(sample_steps)), -1, dtype=np.int16)
    hits = np.full(n, np.nan)
    active = np.arange(n)
    amp = math.sqrt(2.0 * cfg.epsilon * cfg.dt)
    dt = cfg.dt
    drift = spec.potential.drift
    if cfg.target is not None:
        center = np.atleast_1d(np.asarray(cfg.target[0], dtype=float))
        r2 = float(cfg.target[1]) ** 2
    sample_at = {int(s): k for k, s in enumerate(sample_steps)}
    if 0 in sample_at:
        labels[:, sample_at[0]] = label(x)
    if cfg.target is not None:
        inside = np.sum((x - center) ** 2, axis=1) < r2
        hits[inside] = 0.0
        if cfg.stop_on_hit:
            active = active[~inside]
    clamps = 0
    done = 0
    step = 0
    while step < n_steps and active.size:
        block = min(NOISE_BLOCK, n_steps - step)
        noise = np.stack([rngs[i].standard_normal((NOISE_BLOCK, d)) for i in active]) * amp
        xa = x[active]
        for k in range(block):
            xa = xa + drift(xa) * dt + noise[:, k]
            out_lo, out_hi = xa < lo, xa > hi
            if out_lo.any() or out_hi.any():
                clamps += int(np.count_nonzero((out_lo | out_hi).any(axis=1)))
                xa = np.where(out_lo, 2 * lo - xa, xa)
                xa = np.where(out_hi, 2 * hi - xa, xa)
                xa = np.clip(xa, lo, hi)
            step += 1
            if cfg.target is not None:
                fresh = (np.sum((xa - center) ** 2, axis=1) < r2) & np.isnan(hits[active])
                if fresh.any():
                    hits[active[fresh]] = step * dt
            s = sample_at.get(step)
            if s is not None:
                labels[active, s] = label(xa)
        done += block * active.size
        x[active] = xa
        if cfg.target is not None and cfg.stop_on_hit:
            active = active[np.isnan(hits[active])]
    return labels, hits, clamps, done


def simulate(spec: PotentialSpec, config: SimConfig, valleys: dict | None = None,
             graph: LandscapeGraph | None = None, tree: TreeStructure | None = None) -> TrajectoryEnsemble:
    """Run ``n_traj`` trajectories from each start point.

    ``valleys`` maps minimum ids to :class:`Valley`; when missing they are
    built with ``config.valley_radius`` (or the largest admissible radius of
    the tree, scaled by 0.9).
    """
    graph = graph or graph_of(spec)
    config.validate_for(spec, graph)
    if valleys is None:
        valleys = default_valleys(spec, graph, config.valley_radius, tree)
    owners = tuple(m.id for m in graph.minima)
    label = _labeler(spec, valleys, owners)
    n_steps = int(math.ceil(config.horizon / config.dt - 1e-9))
    times = config.sample_times or (0.0,)
    sample_steps = np.array([int(round(t / config.dt)) for t in times])
    if np.any(np.diff(sample_steps) <= 0):
        raise ValueError("sample times collapse onto the same step; refine dt or spread them out")
    n_steps = max(n_steps, int(sample_steps.max()))
    starts = np.array(config.start_points, dtype=float)
    total = len(starts) * config.n_traj
    start_index = np.repeat(np.arange(len(starts)), config.n_traj)
    x0 = starts[start_index]
    chunks = [np.arange(a, min(a + CHUNK, total)) for a in range(0, total, CHUNK)]

    def job(ids):
        return _run_chunk(spec, config, ids, x0[ids], sample_steps, n_steps, label)

    workers = worker_count()
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, chunks))
    else:
        results = [job(ids) for ids in chunks]
    labels = np.concatenate([r[0] for r in results])
    hits = np.concatenate([r[1] for r in results])
    clamps = sum(r[2] for r in results)
    steps = sum(r[3] for r in results)
    if steps and clamps > MAX_BOUNDARY_FRACTION * steps:
        raise BoundaryHitExcessive(
            f"{clamps} of {steps} steps hit the box boundary; enlarge the box or lower epsilon")
    return TrajectoryEnsemble(
        times=sample_steps * config.dt, labels=labels, owners=owners, start_index=start_index,
        hit_times=hits, boundary_hits=clamps, steps=steps, config=config, valleys=dict(valleys))


def default_valleys(spec: PotentialSpec, graph: LandscapeGraph, r0: float | None = None,
                    tree: TreeStructure | None = None) -> dict:
    if r0 is None:
        from .landscape import default_r0
        from .tree import build_tree

        tree = tree or build_tree(graph, HeightIndex(graph))
        r0 = default_r0(tree.depths)
    return {m.id: valley_of(spec, graph, m.id, r0) for m in graph.minima}


# ---------------------------------------------------------------------------
# occupation laws and coarse TV
# ---------------------------------------------------------------------------
def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


@dataclass(frozen=True, eq=False)
class EmpiricalLaw:
    measure: DiscreteMeasure
    counts: np.ndarray
    n: int
    intervals: dict


def _cells(partition: Sequence) -> list:
    return [state_label(c) for c in partition] + [TRANSIT]


def _cell_index(ens: TrajectoryEnsemble, partition: Sequence) -> np.ndarray:
    """Map label index -> cell index (transit last)."""
    lut = np.full(len(ens.owners) + 1, len(partition), dtype=np.int64)  # last slot: label -1
    for c, cell in enumerate(partition):
        for m in cell:
            lut[ens.owners.index(m)] = c
    return lut


def empirical_counts(ens: TrajectoryEnsemble, t: float, partition: Sequence, start: int | None = None) -> np.ndarray:
    k = ens.time_index(t)
    lab = ens.labels[:, k]
    if start is not None:
        lab = lab[ens.start_index == start]
    lut = _cell_index(ens, partition)
    return np.bincount(lut[np.where(lab < 0, len(ens.owners), lab)], minlength=len(partition) + 1)


def empirical_valley_law(ens: TrajectoryEnsemble, t: float, partition: Sequence,
                         start: int | None = None) -> EmpiricalLaw:
    """Occupation frequencies of the partition cells (and transit) at time ``t``."""
    counts = empirical_counts(ens, t, partition, start)
    n = int(counts.sum())
    names = _cells(partition)
    meas = DiscreteMeasure(tuple(names), counts / n)
    ci = {c: wilson_interval(int(k), n) for c, k in zip(names, counts)}
    return EmpiricalLaw(meas, counts, n, ci)


def reference_law(spec: PotentialSpec, valleys: dict, partition: Sequence, epsilon: float,
                  region: Sequence | None = None) -> DiscreteMeasure:
    """Gibbs probabilities of the partition cells at finite ``epsilon``.

    Valleys of minima outside the partition count as transit, matching the
    labels of :func:`empirical_valley_law`.
    """
    mass = cell_masses(spec, valleys, epsilon, region)
    w = [sum(mass[m] for m in cell) for cell in partition]
    w.append(max(0.0, 1.0 - sum(w)))
    w = np.array(w)
    return DiscreteMeasure(tuple(_cells(partition)), w / w.sum())


@dataclass(frozen=True)
class CoarseTv:
    value: float
    lo: float
    hi: float
    se: float


def empirical_coarse_tv(ens: TrajectoryEnsemble, t: float, partition: Sequence, reference: DiscreteMeasure,
                        start: int | None = None, n_boot: int = 1000, seed: int | None = None) -> CoarseTv:
    """Half-L1 between the occupation law and ``reference`` with a bootstrap interval."""
    counts = empirical_counts(ens, t, partition, start)
    n = int(counts.sum())
    names = _cells(partition)
    ref = reference.aligned(names)
    p = counts / n
    value = 0.5 * float(np.abs(p - ref).sum())
    rng = np.random.default_rng([ens.config.seed if seed is None else seed, 0xB007, ens.time_index(t)])
    boot = rng.multinomial(n, p, size=n_boot) / n
    tv = 0.5 * np.abs(boot - ref).sum(axis=1)
    lo, hi = np.percentile(tv, [2.5, 97.5])
    return CoarseTv(value, float(lo), float(hi), float(tv.std(ddof=1)))


# ---------------------------------------------------------------------------
# hitting times
# ---------------------------------------------------------------------------
def ek_time(graph: LandscapeGraph, m1: str, m2: str, epsilon: float) -> float:
    """Expected transition time from ``m1`` to ``m2`` for a single-barrier pair.

    Sums the Eyring-Kramers weights of the saddles next to ``m1`` at the
    communication height.
    """
    idx = HeightIndex(graph)
    h = idx.pair(m1, m2)
    w = sum(ek_weight(s) for s in graph.saddles
            if m1 in graph.targets(s.id) and abs(s.value - h) <= 1e-9)
    if w == 0:
        raise ValueError(f"{m1} and {m2} are not separated by a single adjacent barrier")
    return nu_weight(graph.point(m1)) / w * math.exp((h - graph.value(m1)) / epsilon)


@dataclass(frozen=True, eq=False)
class HittingStats:
    mean: float
    se: float
    times: np.ndarray
    n_hit: int
    n_total: int
    prediction: float
    ratio: float
    ks: float
    ks_pvalue: float


def hitting_times(spec: PotentialSpec, config: SimConfig, start: str, target: str,
                  radius: float | None = None) -> HittingStats:
    """First time to reach the ball of radius ``radius`` (default eps) around ``target``."""
    graph = graph_of(spec)
    m1, m2 = graph.point(start), graph.point(target)
    radius = config.epsilon if radius is None else radius
    cfg = SimConfig(config.epsilon, config.dt, config.horizon, config.n_traj, config.seed,
                    (m1.position,), valley_radius=config.valley_radius, level_H=config.level_H,
                    sample_times=(), target=(m2.position, radius), stop_on_hit=True)
    ens = simulate(spec, cfg, valleys=_no_valleys(graph, spec), graph=graph)
    tau = ens.hit_times
    hit = tau[np.isfinite(tau)]
    n = len(tau)
    if len(hit) < 0.9 * n:
        raise HorizonTooShort(f"only {len(hit)} of {n} trajectories reached {target} before t = {config.horizon}")
    mean = float(hit.mean())
    se = float(hit.std(ddof=1) / math.sqrt(len(hit))) if len(hit) > 1 else math.inf
    pred = ek_time(graph, start, target, config.epsilon)
    ks = stats.kstest(hit / mean, "expon")
    return HittingStats(mean, se, np.sort(hit), len(hit), n, pred, mean / pred, float(ks.statistic),
                        float(ks.pvalue))


def _no_valleys(graph: LandscapeGraph, spec: PotentialSpec) -> dict:
    """Empty valleys (labels are not needed when only hitting times are tracked)."""
    if spec.dim == 1:
        return {m.id: Valley(m.id, 0.0, m.value, interval=(math.inf, -math.inf)) for m in graph.minima}
    xs = ys = np.array([0.0, 1.0])
    return {m.id: Valley(m.id, 0.0, m.value, mask=np.zeros((2, 2), bool), axes=(xs, ys)) for m in graph.minima}


# ---------------------------------------------------------------------------
# mixing time
# ---------------------------------------------------------------------------
def level_set_starts(spec: PotentialSpec, H: float) -> list:
    """One start per minimum plus the outermost points of {U <= H} (1D)."""
    graph = graph_of(spec)
    starts = [m.position for m in graph.minima]
    if spec.dim != 1:
        return starts
    (lo, hi), = spec.box
    f = lambda t: float(spec.potential.value(np.array([[t]]))[0]) - H  # noqa: E731
    xs = [m.position[0] for m in graph.minima]
    left, right = min(xs), max(xs)
    if f(left) > 0 or f(right) > 0:
        raise ValueError(f"H = {H} is below a minimum")
    if f(lo) > 0:
        starts.insert(0, (optimize.brentq(f, lo, left, xtol=1e-13),))
    if f(hi) > 0:
        starts.append((optimize.brentq(f, right, hi, xtol=1e-13),))
    return starts


@dataclass(frozen=True, eq=False)
class MixingEstimate:
    time: float
    lo: float
    hi: float
    predicted: float
    ratio: float
    times: np.ndarray
    worst_tv: np.ndarray


def empirical_mixing_time(spec: PotentialSpec, config: SimConfig, tree: TreeStructure, delta: float,
                          H: float | None = None, starts: Sequence | None = None,
                          partition: Sequence | None = None) -> MixingEstimate:
    """First sample time where the worst start's coarse TV to Gibbs is at most ``delta``.

    The interval uses the bootstrap bounds: ``lo`` is the first time the
    worst lower bound drops below ``delta``, ``hi`` the first time the worst
    upper bound does.
    """
    graph = graph_of(spec)
    if starts is None:
        starts = level_set_starts(spec, H) if H is not None else list(config.start_points)
    cfg = SimConfig(config.epsilon, config.dt, config.horizon, config.n_traj, config.seed, tuple(starts),
                    valley_radius=config.valley_radius, level_H=H if H is not None else config.level_H,
                    sample_times=config.sample_times)
    ens = simulate(spec, cfg, graph=graph, tree=tree)
    partition = partition or [frozenset([m.id]) for m in graph.minima]
    ref = reference_law(spec, ens.valleys, partition, config.epsilon)
    worst, worst_lo, worst_hi = [], [], []
    for t in ens.times:
        vals = [empirical_coarse_tv(ens, t, partition, ref, start=k) for k in range(len(starts))]
        worst.append(max(v.value for v in vals))
        worst_lo.append(max(v.lo for v in vals))
        worst_hi.append(max(v.hi for v in vals))
    worst = np.array(worst)

    def first_below(arr):
        below = np.flatnonzero(np.asarray(arr) <= delta)
        return float(ens.times[below[0]]) if below.size else math.inf

    est = first_below(worst)
    pred = math.exp(tree.depths[-1] / config.epsilon) * chain_mixing_time(tree, delta)
    return MixingEstimate(est, first_below(worst_lo), first_below(worst_hi), pred, est / pred, ens.times, worst)


# ---------------------------------------------------------------------------
# finite-eps predictions from the reduced chains (1D)
# ---------------------------------------------------------------------------
def chain_coarse_prediction(spec: PotentialSpec, tree: TreeStructure, valleys: dict, partition: Sequence,
                            epsilon: float, m: str, t: float, p: int = 1) -> DiscreteMeasure:
    """Coarse law the layer-``p`` chain predicts at diffusion time ``t`` from minimum ``m``.

    Each metastable state carries the Gibbs law conditioned on the basins of
    its minima, so the prediction tends to the exact Gibbs cell law when the
    chain mixes and keeps the finite-eps spread of every well.
    """
    from .ctmc import transition_probabilities
    from .landscape import basin_intervals
    from .tvmix import hitting_law

    L = tree.layer(p)
    theta = math.exp(tree.depths[p - 1] / epsilon)
    a = hitting_law(tree, m, p)
    law = transition_probabilities(L.chain, DiscreteMeasure(L.chain.states, a.aligned(L.chain.states)),
                                   t / theta)
    basins = basin_intervals(spec)
    names = _cells(partition)
    out = np.zeros(len(names))
    for M, w in zip(law.states, law.weights):
        if w == 0:
            continue
        region = sorted(basins[x] for x in M)
        out += w * reference_law(spec, valleys, partition, epsilon, region).aligned(names)
    return DiscreteMeasure(tuple(names), out / out.sum())


def plateau_reference(spec: PotentialSpec, tree: TreeStructure, valleys: dict, partition: Sequence,
                      epsilon: float, m: str, p: int) -> tuple[DiscreteMeasure, float]:
    """Finite-eps plateau between layers ``p-1`` and ``p`` started at ``m``.

    The hitting law on layer-``p`` states is spread over cells with the
    Gibbs law conditioned on the union of each state's valleys.  Returns the
    cell law and its TV distance to the unconditioned Gibbs cell law.
    """
    from .tvmix import hitting_law

    names = _cells(partition)
    mass = cell_masses(spec, valleys, epsilon)
    ref = reference_law(spec, valleys, partition, epsilon)
    lut = {x: c for c, cell in enumerate(partition) for x in cell}
    out = np.zeros(len(names))
    a = hitting_law(tree, m, p)
    for M, w in zip(a.states, a.weights):
        if w == 0:
            continue
        inner = np.zeros(len(names))
        for x in M:
            inner[lut.get(x, len(partition))] += mass[x]
        out += w * inner / inner.sum()
    law = DiscreteMeasure(tuple(names), out)
    return law, 0.5 * float(np.abs(out - ref.aligned(names)).sum())
