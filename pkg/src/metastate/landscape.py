"""Potential landscapes: critical points, weights, valleys and Gibbs masses.

Three input kinds are supported.  ``analytic-1d`` and ``analytic-2d`` carry an
expression (or callable) for U on a bounding box and get their critical
points by grid scan plus Newton; ``critical-graph`` lists minima, saddles and
saddle-to-minimum arrows directly and has no geometry.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, ndimage, optimize

from .errors import (
    DegenerateCritical,
    LandscapeValidationError,
    QuadratureNotConverged,
    UnresolvedConnectivity,
    ValleyContainsOtherCritical,
)
from .expr import compile_expression

MORSE_TOL = 1e-10
NEWTON_GTOL = 1e-12
PROBE_TOL = 1e-8
KINDS = ("analytic-1d", "analytic-2d", "critical-graph")


# ---------------------------------------------------------------------------
# critical points and the minimum-saddle graph
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class CriticalPoint:
    id: str
    value: float
    role: str  # "minimum" | "saddle"
    hessian_det: float
    position: tuple | None = None
    neg_saddle_det: float | None = None
    mu_sigma: float | None = None

    def __post_init__(self):
        if self.role not in ("minimum", "saddle"):
            raise LandscapeValidationError(f"{self.id}: unknown role {self.role!r}")
        if not math.isfinite(self.value):
            raise LandscapeValidationError(f"{self.id}: non-finite value")
        if abs(self.hessian_det) <= MORSE_TOL:
            raise DegenerateCritical(f"{self.id}: |det Hessian| = {abs(self.hessian_det):.3e} <= {MORSE_TOL:g}")
        if self.role == "minimum" and self.hessian_det <= 0:
            raise LandscapeValidationError(f"{self.id}: minimum with det Hessian <= 0")
        if self.role == "saddle":
            neg = self.neg_saddle_det if self.neg_saddle_det is not None else -self.hessian_det
            if neg <= 0:
                raise LandscapeValidationError(f"{self.id}: saddle needs -det Hessian > 0")
            if self.mu_sigma is None or not self.mu_sigma > 0:
                raise LandscapeValidationError(f"{self.id}: saddle needs mu_sigma > 0")
            object.__setattr__(self, "neg_saddle_det", float(neg))

    def to_dict(self) -> dict:
        d = {"id": self.id, "role": self.role, "value": self.value, "hessianDet": self.hessian_det}
        if self.position is not None:
            d["position"] = list(self.position)
        if self.role == "saddle":
            d["negSaddleDet"] = self.neg_saddle_det
            d["muSigma"] = self.mu_sigma
        return d


@dataclass(frozen=True)
class LandscapeGraph:
    """Minima, saddles and arrows ``(saddle, minimum)`` for descending orbits."""

    minima: tuple
    saddles: tuple
    arrows: tuple
    maxima: tuple = ()  # positions of local maxima (2D only); never part of the graph

    def __post_init__(self):
        object.__setattr__(self, "minima", tuple(self.minima))
        object.__setattr__(self, "saddles", tuple(self.saddles))
        object.__setattr__(self, "arrows", tuple(sorted(tuple(a) for a in self.arrows)))
        ids = [p.id for p in self.minima + self.saddles]
        if len(set(ids)) != len(ids):
            raise LandscapeValidationError("duplicate critical point ids")
        if len(self.minima) < 2:
            raise LandscapeValidationError(
                f"landscape has {len(self.minima)} minimum; at least two stable states are required")
        if any(p.role != "minimum" for p in self.minima) or any(p.role != "saddle" for p in self.saddles):
            raise LandscapeValidationError("role mismatch in minima/saddles lists")
        mins = {p.id for p in self.minima}
        sads = {p.id for p in self.saddles}
        out: dict = {s: [] for s in sads}
        for s, m in self.arrows:
            if s not in sads or m not in mins:
                raise LandscapeValidationError(f"arrow ({s}, {m}) must go from a saddle to a minimum")
            out[s].append(m)
        for s, ms in out.items():
            if len(ms) != 2:
                raise LandscapeValidationError(f"saddle {s} has {len(ms)} arrows; exactly two are required")
        # connectivity of the undirected minimum-saddle graph
        seen, stack = {self.minima[0].id}, [self.minima[0].id]
        by_min: dict = {m: [] for m in mins}
        for s, ms in out.items():
            for m in ms:
                by_min[m].append(s)
        while stack:
            m = stack.pop()
            for s in by_min[m]:
                for m2 in out[s]:
                    if m2 not in seen:
                        seen.add(m2)
                        stack.append(m2)
        if seen != mins:
            raise LandscapeValidationError(f"minima {sorted(mins - seen)} are not connected to the rest")
        object.__setattr__(self, "_targets", {s: tuple(sorted(ms)) for s, ms in out.items()})
        object.__setattr__(self, "_by_id", {p.id: p for p in self.minima + self.saddles})

    def __hash__(self):
        return hash((self.minima, self.saddles, self.arrows))

    @property
    def points(self) -> tuple:
        return self.minima + self.saddles

    def point(self, pid) -> CriticalPoint:
        return self._by_id[pid]

    def value(self, pid) -> float:
        return self._by_id[pid].value

    def targets(self, saddle_id) -> tuple:
        return self._targets[saddle_id]

    def minimum_ids(self) -> list:
        return [m.id for m in self.minima]

    def global_minima(self, tol: float = 1e-9) -> frozenset:
        u = min(m.value for m in self.minima)
        return frozenset(m.id for m in self.minima if m.value - u <= tol)

    def to_dict(self) -> dict:
        return {
            "criticalPoints": [p.to_dict() for p in self.points],
            "arrows": [list(a) for a in self.arrows],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LandscapeGraph":
        minima, saddles = [], []
        for p in d["criticalPoints"]:
            cp = CriticalPoint(
                id=str(p["id"]),
                value=float(p["value"]),
                role=p["role"],
                hessian_det=float(p["hessianDet"]) if "hessianDet" in p else -float(p["negSaddleDet"]),
                position=tuple(p["position"]) if p.get("position") is not None else None,
                neg_saddle_det=p.get("negSaddleDet"),
                mu_sigma=p.get("muSigma"),
            )
            (minima if cp.role == "minimum" else saddles).append(cp)
        return cls(tuple(minima), tuple(saddles), tuple((str(s), str(m)) for s, m in d["arrows"]))


def nu_weight(point: CriticalPoint) -> float:
    if point.role != "minimum":
        raise ValueError("nu_weight is defined for minima")
    return 1.0 / math.sqrt(point.hessian_det)


def ek_weight(saddle: CriticalPoint) -> float:
    if saddle.role != "saddle":
        raise ValueError("ek_weight is defined for saddles")
    return saddle.mu_sigma / (2 * math.pi * math.sqrt(saddle.neg_saddle_det))


# ---------------------------------------------------------------------------
# analytic potentials
# ---------------------------------------------------------------------------
class Potential:
    """U (and optionally its gradient and a perturbation field ell) in d = 1 or 2.

    Point arrays have shape ``(..., d)``.  Without an explicit gradient the
    gradient is taken by complex step, which is exact to rounding for the
    analytic expressions this package accepts.
    """

    _H = 1e-20

    def __init__(
        self,
        dim: int,
        value: Callable,
        grad: Sequence[Callable] | None = None,
        ell: Sequence[Callable] | None = None,
        source: dict | None = None,
    ):
        if dim not in (1, 2):
            raise ValueError("only 1D and 2D potentials are supported")
        self.dim = dim
        self._u = value
        self._grad = list(grad) if grad is not None else None
        self._ell = list(ell) if ell is not None else None
        self.source = source or {}

    @classmethod
    def from_expressions(cls, dim: int, u: str, grad=None, ell=None) -> "Potential":
        names = ("x",) if dim == 1 else ("x", "y")
        as_list = (lambda g: [g] if isinstance(g, str) else list(g))
        g = [compile_expression(e, names) for e in as_list(grad)] if grad else None
        l_ = [compile_expression(e, names) for e in as_list(ell)] if ell else None
        if g is not None and len(g) != dim or l_ is not None and len(l_) != dim:
            raise LandscapeValidationError("gradient and ell need one expression per coordinate")
        src = {"u": u}
        if grad:
            src["grad"] = as_list(grad)
        if ell:
            src["ell"] = as_list(ell)
        return cls(dim, compile_expression(u, names), g, l_, source=src)

    @property
    def has_ell(self) -> bool:
        return self._ell is not None

    def _split(self, X):
        X = np.asarray(X)
        return [X[..., k] for k in range(self.dim)]

    def value(self, X) -> np.ndarray:
        return np.asarray(self._u(*self._split(np.asarray(X, dtype=float))), dtype=float)

    def _complex_jac(self, fn: Callable, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape)
        for k in range(self.dim):
            Z = X.astype(complex)
            Z[..., k] += 1j * self._H
            out[..., k] = np.imag(fn(*self._split(Z))) / self._H
        return out

    def gradient(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self._grad is not None:
            cs = self._split(X)
            return np.stack([np.asarray(g(*cs), dtype=float) + 0 * cs[0] for g in self._grad], axis=-1)
        return self._complex_jac(self._u, X)

    def ell(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self._ell is None:
            return np.zeros(X.shape)
        cs = self._split(X)
        return np.stack([np.asarray(f(*cs), dtype=float) + 0 * cs[0] for f in self._ell], axis=-1)

    def drift(self, X) -> np.ndarray:
        """b = -(grad U + ell)."""
        g = self.gradient(X)
        if self._ell is not None:
            g = g + self.ell(X)
        return -g

    def _jacobian_of(self, fields: Sequence[Callable] | None, base: Callable | None, p) -> np.ndarray:
        """Jacobian at one point: complex step on explicit fields, else five-point stencil."""
        p = np.asarray(p, dtype=float)
        d = self.dim
        J = np.empty((d, d))
        if fields is not None:
            try:
                for k in range(d):
                    z = p.astype(complex)
                    z[k] += 1j * self._H
                    cs = [z[i] for i in range(d)]
                    J[:, k] = [np.imag(complex(f(*cs))) / self._H for f in fields]
                return J
            except TypeError:
                pass
        h = 1e-3 * max(1.0, float(np.max(np.abs(p))))
        for k in range(d):
            e = np.zeros(d)
            e[k] = h
            J[:, k] = (-base(p + 2 * e) + 8 * base(p + e) - 8 * base(p - e) + base(p - 2 * e)) / (12 * h)
        return J

    def hessian(self, p) -> np.ndarray:
        H = self._jacobian_of(self._grad, self.gradient, p)
        return 0.5 * (H + H.T)

    def ell_jacobian(self, p) -> np.ndarray:
        if self._ell is None:
            return np.zeros((self.dim, self.dim))
        return self._jacobian_of(self._ell, self.ell, p)


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    kind: str
    potential: Potential | None = None
    box: tuple | None = None  # ((lo, hi),) per axis
    grid: int | None = None
    graph: LandscapeGraph | None = None
    name: str = ""
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise LandscapeValidationError(f"unknown landscape kind {self.kind!r}")
        if self.kind == "critical-graph":
            if self.graph is None:
                raise LandscapeValidationError("critical-graph landscape needs criticalPoints and arrows")
            return
        if self.potential is None or self.box is None:
            raise LandscapeValidationError("analytic landscape needs a potential and a bounding box")
        dim = 1 if self.kind == "analytic-1d" else 2
        if self.potential.dim != dim or len(self.box) != dim:
            raise LandscapeValidationError(f"{self.kind} needs a {dim}-dimensional potential and box")
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        if any(not lo < hi for lo, hi in box):
            raise LandscapeValidationError("bounding box must have lo < hi on each axis")
        object.__setattr__(self, "box", box)

    @property
    def dim(self) -> int:
        return {"analytic-1d": 1, "analytic-2d": 2}.get(self.kind, 0)

    @property
    def analytic(self) -> bool:
        return self.kind != "critical-graph"

    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.box])

    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.box])

    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper() - self.lower()))

    def grid_points(self) -> int:
        return self.grid or (4096 if self.dim == 1 else 512)


# ---------------------------------------------------------------------------
# input validation on the box
# ---------------------------------------------------------------------------
def _probe_points(spec: PotentialSpec, n: int = 9) -> np.ndarray:
    axes = [np.linspace(lo, hi, n + 2)[1:-1] for lo, hi in spec.box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def validate_potential(spec: PotentialSpec) -> None:
    """Smoothness probes, inward gradient on the box boundary, and ell constraints."""
    pot = spec.potential
    P = _probe_points(spec)
    u = pot.value(P)
    g = pot.gradient(P)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(g))):
        raise LandscapeValidationError("potential or gradient is not finite on the box")
    # gradient against a central difference of U catches kinks and typos in grad
    h = 1e-6 * max(1.0, spec.diameter())
    fd = np.empty_like(g)
    for k in range(spec.dim):
        e = np.zeros(spec.dim)
        e[k] = h
        fd[:, k] = (pot.value(P + e) - pot.value(P - e)) / (2 * h)
    scale = 1.0 + np.abs(g)
    if np.max(np.abs(fd - g) / scale) > 1e-4:
        raise LandscapeValidationError("gradient disagrees with finite differences of U (not smooth?)")
    for p in P[:: max(1, len(P) // 8)]:
        if not np.all(np.isfinite(pot.hessian(p))):
            raise LandscapeValidationError("Hessian is not finite at a probe point")
    # growth: the drift must point into the box on its boundary
    if spec.dim == 1:
        (lo, hi), = spec.box
        gl, gh = pot.gradient(np.array([[lo], [hi]]))[:, 0]
        if not (gl < 0 < gh):
            raise LandscapeValidationError("grad U does not point outward on the box ends; enlarge the box")
    else:
        (x0, x1), (y0, y1) = spec.box
        t = np.linspace(0, 1, 41)
        edges = [
            (np.stack([np.full_like(t, x0), y0 + (y1 - y0) * t], -1), np.array([-1.0, 0.0])),
            (np.stack([np.full_like(t, x1), y0 + (y1 - y0) * t], -1), np.array([1.0, 0.0])),
            (np.stack([x0 + (x1 - x0) * t, np.full_like(t, y0)], -1), np.array([0.0, -1.0])),
            (np.stack([x0 + (x1 - x0) * t, np.full_like(t, y1)], -1), np.array([0.0, 1.0])),
        ]
        for pts, normal in edges:
            if np.any(pot.gradient(pts) @ normal <= 0):
                raise LandscapeValidationError("grad U does not point outward on the box boundary; enlarge the box")
    if pot.has_ell:
        L = pot.ell(P)
        orth = np.abs(np.sum(g * L, axis=-1))
        div = np.array([np.trace(pot.ell_jacobian(p)) for p in P])
        if np.max(orth) > PROBE_TOL or np.max(np.abs(div)) > PROBE_TOL:
            raise LandscapeValidationError(
                f"ell must be divergence-free and orthogonal to grad U "
                f"(max |grad U . ell| = {np.max(orth):.2e}, max |div ell| = {np.max(np.abs(div)):.2e})")


# ---------------------------------------------------------------------------
# critical point search
# ---------------------------------------------------------------------------
def _classify_point(pot: Potential, x: np.ndarray) -> tuple[str, float, float | None]:
    H = pot.hessian(x)
    det = float(np.linalg.det(H))
    if abs(det) <= MORSE_TOL:
        raise DegenerateCritical(f"critical point at {x.tolist()} has |det Hessian| = {abs(det):.3e}")
    ev = np.linalg.eigvalsh(H)
    nneg = int(np.sum(ev < 0))
    if nneg == 0:
        return "minimum", det, None
    if nneg == 1:
        A = H + pot.ell_jacobian(x)
        lam = np.linalg.eigvals(A)
        neg = [z.real for z in lam if z.real < 0 and abs(z.imag) < 1e-9 * max(1.0, abs(z))]
        if len(neg) != 1:
            raise LandscapeValidationError(f"saddle at {x.tolist()}: Hessian + D ell has {len(neg)} negative eigenvalues")
        return "saddle", det, -neg[0]
    return "maximum", det, None


def _newton(pot: Potential, x0: np.ndarray, lo: np.ndarray, hi: np.ndarray, iters: int = 60) -> np.ndarray | None:
    x = np.array(x0, dtype=float)
    for _ in range(iters):
        g = pot.gradient(x[None])[0]
        if np.linalg.norm(g) <= NEWTON_GTOL:
            return x
        try:
            step = np.linalg.solve(pot.hessian(x), g)
        except np.linalg.LinAlgError:
            return None
        x = x - step
        if np.any(x < lo) or np.any(x > hi):
            return None
    g = pot.gradient(x[None])[0]
    return x if np.linalg.norm(g) <= 1e-9 else None


def _critical_1d(spec: PotentialSpec) -> list[np.ndarray]:
    pot = spec.potential
    (lo, hi), = spec.box
    xs = np.linspace(lo, hi, spec.grid_points())
    g = pot.gradient(xs[:, None])[:, 0]
    dU = lambda t: float(pot.gradient(np.array([[t]]))[0, 0])  # noqa: E731
    roots = []
    for i in range(len(xs) - 1):
        if g[i] == 0:
            roots.append(xs[i])
        elif g[i] * g[i + 1] < 0:
            roots.append(optimize.brentq(dU, xs[i], xs[i + 1], xtol=1e-15, rtol=1e-15, maxiter=200))
    out = []
    for r in roots:
        x = _newton(pot, np.array([r]), np.array([lo]), np.array([hi]))
        out.append(x if x is not None else np.array([r]))
    return out


def _critical_2d(spec: PotentialSpec) -> list[np.ndarray]:
    pot = spec.potential
    (x0, x1), (y0, y1) = spec.box
    n = spec.grid_points()
    xs, ys = np.linspace(x0, x1, n), np.linspace(y0, y1, n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    G = pot.gradient(np.stack([X, Y], -1))
    cand = np.ones((n - 1, n - 1), dtype=bool)
    for k in range(2):
        c = G[..., k]
        corners = np.stack([c[:-1, :-1], c[1:, :-1], c[:-1, 1:], c[1:, 1:]])
        cand &= (corners.min(0) <= 0) & (corners.max(0) >= 0)
    lo, hi = spec.lower(), spec.upper()
    found: list[np.ndarray] = []
    tol = 1e-6 * spec.diameter()
    for i, j in zip(*np.nonzero(cand)):
        start = np.array([(xs[i] + xs[i + 1]) / 2, (ys[j] + ys[j + 1]) / 2])
        x = _newton(pot, start, lo, hi)
        if x is None:
            continue
        if all(np.linalg.norm(x - f) > tol for f in found):
            found.append(x)
    found.sort(key=lambda p: (round(p[0], 9), round(p[1], 9)))
    return found


def _descend(pot: Potential, start: np.ndarray, minima: list[np.ndarray], spec: PotentialSpec) -> int:
    from scipy.integrate import solve_ivp

    M = np.array(minima)
    lo, hi = spec.lower(), spec.upper()

    def near(t, x):
        return float(np.min(np.linalg.norm(M - x, axis=1))) - 1e-6
    near.terminal = True

    def out(t, x):
        return float(min(np.min(x - lo), np.min(hi - x)))
    out.terminal = True

    x, t_total = start, 0.0
    for _ in range(20):
        sol = solve_ivp(lambda t, z: pot.drift(z[None])[0], (0, 1e3), x, rtol=1e-9, atol=1e-12,
                        events=(near, out))
        x = sol.y[:, -1]
        t_total += sol.t[-1]
        if sol.t_events[0].size:
            return int(np.argmin(np.linalg.norm(M - x, axis=1)))
        if sol.t_events[1].size:
            break
    raise UnresolvedConnectivity(f"descent from {start.tolist()} did not reach a minimum inside the box")


def find_critical_points(spec: PotentialSpec) -> LandscapeGraph:
    """All minima and saddles inside the box, with descent arrows."""
    if spec.kind == "critical-graph":
        return spec.graph
    validate_potential(spec)
    pot = spec.potential
    pts = _critical_1d(spec) if spec.dim == 1 else _critical_2d(spec)
    typed = []
    for x in pts:
        role, det, mu = _classify_point(pot, x)
        typed.append((x, role, det, mu))
    mins = [t for t in typed if t[1] == "minimum"]
    sads = [t for t in typed if t[1] == "saddle"]
    maxima = tuple(tuple(t[0].tolist()) for t in typed if t[1] == "maximum")
    if len(mins) < 2:
        raise LandscapeValidationError(
            f"found {len(mins)} minimum in the box; at least two stable states are required")
    minima = tuple(
        CriticalPoint(f"m{i + 1}", float(pot.value(x[None])[0]), "minimum", det, tuple(x.tolist()))
        for i, (x, _, det, _) in enumerate(mins))
    saddles = tuple(
        CriticalPoint(f"s{i + 1}", float(pot.value(x[None])[0]), "saddle", det, tuple(x.tolist()),
                      neg_saddle_det=-det, mu_sigma=mu)
        for i, (x, _, det, mu) in enumerate(sads))
    arrows = []
    if spec.dim == 1:
        xm = np.array([m.position[0] for m in minima])
        for s in saddles:
            xs = s.position[0]
            left, right = xm[xm < xs], xm[xm > xs]
            if not left.size or not right.size:
                raise UnresolvedConnectivity(f"saddle {s.id} at {xs} has no minimum on one side inside the box")
            arrows.append((s.id, minima[int(np.flatnonzero(xm == left.max())[0])].id))
            arrows.append((s.id, minima[int(np.flatnonzero(xm == right.min())[0])].id))
    else:
        mpos = [np.array(m.position) for m in minima]
        delta = 1e-4 * spec.diameter()
        for s in saddles:
            p = np.array(s.position)
            A = pot.hessian(p) + pot.ell_jacobian(p)
            lam, vec = np.linalg.eig(A)
            v = np.real(vec[:, int(np.argmin(lam.real))])
            v /= np.linalg.norm(v)
            ends = {_descend(pot, p + sgn * delta * v, mpos, spec) for sgn in (1, -1)}
            if len(ends) != 2:
                raise UnresolvedConnectivity(f"both descent branches of {s.id} reach the same minimum")
            arrows += [(s.id, minima[k].id) for k in sorted(ends)]
    return LandscapeGraph(minima, saddles, tuple(arrows), maxima=maxima)


def graph_of(spec: PotentialSpec) -> LandscapeGraph:
    """Cached ``find_critical_points`` (critical point search is the slow part)."""
    cached = spec.source.get("_graph")
    if cached is None:
        cached = find_critical_points(spec)
        spec.source["_graph"] = cached
    return cached


# ---------------------------------------------------------------------------
# valleys
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Valley:
    owner: str
    r0: float
    level: float
    interval: tuple | None = None  # 1D
    mask: np.ndarray | None = None  # 2D, on the grid below
    axes: tuple | None = None

    @property
    def symbolic(self) -> bool:
        return self.interval is None and self.mask is None

    def contains(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.interval is not None:
            a, b = self.interval
            return (X[:, 0] >= a) & (X[:, 0] <= b)
        if self.mask is not None:
            xs, ys = self.axes
            i = np.clip(np.rint((X[:, 0] - xs[0]) / (xs[1] - xs[0])).astype(int), 0, len(xs) - 1)
            j = np.clip(np.rint((X[:, 1] - ys[0]) / (ys[1] - ys[0])).astype(int), 0, len(ys) - 1)
            return self.mask[i, j]
        raise TypeError(f"valley of {self.owner} is symbolic; no geometry is attached")

    def describe(self) -> dict:
        d = {"owner": self.owner, "r0": self.r0, "level": self.level}
        if self.interval is not None:
            d["interval"] = list(self.interval)
        elif self.mask is not None:
            d["cells"] = int(self.mask.sum())
        else:
            d["symbolic"] = f"E({self.owner})"
        return d


def _valley_grid(spec: PotentialSpec) -> tuple:
    n = min(spec.grid_points(), 801)
    return tuple(np.linspace(lo, hi, n) for lo, hi in spec.box)


def valley_of(spec: PotentialSpec, graph: LandscapeGraph, m: str, r0: float) -> Valley:
    """Connected component of {U <= U(m) + r0} containing minimum ``m``.

    Only the exclusion of other critical points is checked here; the upper
    bound on r0 from the depth gaps needs the tree (see ``check_r0``).
    """
    if not r0 > 0:
        raise ValueError("valley radius must be positive")
    owner = graph.point(m)
    level = owner.value + r0
    if spec.kind == "critical-graph":
        for p in graph.points:
            if p.id != m and p.value <= level and _sym_connected(graph, m, p.id, level):
                raise ValleyContainsOtherCritical(f"valley of {m} at level {level} reaches {p.id}")
        return Valley(m, r0, level)
    pot = spec.potential
    others = [p for p in graph.points if p.id != m] + [
        CriticalPoint("max", 0.0, "minimum", 1.0, position=q) for q in graph.maxima]
    if spec.dim == 1:
        (lo, hi), = spec.box
        x_m = owner.position[0]
        f = lambda t: float(pot.value(np.array([[t]]))[0]) - level  # noqa: E731
        h = (hi - lo) / spec.grid_points()
        ends = []
        for direction, bound in ((-1, lo), (1, hi)):
            a = x_m
            while True:
                b = a + direction * h
                if (b - bound) * direction > 0:
                    raise ValleyContainsOtherCritical(f"valley of {m} at level {level} reaches the box boundary")
                if f(b) > 0:
                    break
                a = b
            ends.append(optimize.brentq(f, min(a, b), max(a, b), xtol=1e-14))
        a, b = ends
        for p in others:
            if a <= p.position[0] <= b:
                raise ValleyContainsOtherCritical(f"valley of {m} with r0={r0} contains critical point {p.id}")
        return Valley(m, r0, level, interval=(a, b))
    xs, ys = _valley_grid(spec)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    U = pot.value(np.stack([X, Y], -1))
    lab, _ = ndimage.label(U <= level)
    i0 = int(np.argmin(np.abs(xs - owner.position[0])))
    j0 = int(np.argmin(np.abs(ys - owner.position[1])))
    comp = lab == lab[i0, j0]
    if lab[i0, j0] == 0:
        raise ValleyContainsOtherCritical(f"valley of {m} is below grid resolution; raise r0 or the grid")
    if comp[0].any() or comp[-1].any() or comp[:, 0].any() or comp[:, -1].any():
        raise ValleyContainsOtherCritical(f"valley of {m} at level {level} reaches the box boundary")
    v = Valley(m, r0, level, mask=comp, axes=(xs, ys))
    for p in others:
        if v.contains(np.array(p.position))[0]:
            raise ValleyContainsOtherCritical(f"valley of {m} with r0={r0} contains critical point {p.id}")
    return v


def _sym_connected(graph: LandscapeGraph, a: str, b: str, level: float) -> bool:
    """Whether critical points a, b connect through saddles at or below ``level``."""
    adj: dict = {p.id: set() for p in graph.points}
    for s, m in graph.arrows:
        if graph.value(s) <= level:
            adj[s].add(m)
            adj[m].add(s)
    seen, stack = {a}, [a]
    while stack:
        for q in adj[stack.pop()]:
            if q not in seen:
                seen.add(q)
                stack.append(q)
    return b in seen


def max_r0(depths: Sequence[float]) -> float:
    """Supremum of admissible valley radii for the given layer depths."""
    gaps = [depths[0]] + [b - a for a, b in zip(depths, depths[1:])]
    return min(gaps) / 3.0


def default_r0(depths: Sequence[float]) -> float:
    return 0.9 * max_r0(depths)


def check_r0(r0: float, depths: Sequence[float]) -> None:
    if not 0 < r0 < max_r0(depths):
        raise ValleyContainsOtherCritical(
            f"valley radius {r0} outside (0, {max_r0(depths):.6g}) required by the depth gaps {list(depths)}")


# ---------------------------------------------------------------------------
# Gibbs masses
# ---------------------------------------------------------------------------
def _floor(spec: PotentialSpec) -> float:
    g = graph_of(spec)
    return min(m.value for m in g.minima)


def _quad_1d(spec: PotentialSpec, a: float, b: float, eps: float, umin: float) -> float:
    pot = spec.potential
    f = lambda t: math.exp(-(float(pot.value(np.array([[t]]))[0]) - umin) / eps)  # noqa: E731
    pts = [p.position[0] for p in graph_of(spec).points if a < p.position[0] < b]
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, points=pts or None, limit=500, epsabs=0.0, epsrel=1e-11)
        except integrate.IntegrationWarning as exc:
            raise QuadratureNotConverged(f"quadrature on [{a}, {b}] failed: {exc}") from None
    if err > 1e-8 * max(val, 1e-300):
        raise QuadratureNotConverged(f"quadrature error {err:.2e} too large on [{a}, {b}]")
    return val


def _grid_mass_2d(spec: PotentialSpec, eps: float, umin: float, n: int, valley: Valley | None) -> float:
    xs, ys = (np.linspace(lo, hi, n) for lo, hi in spec.box)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    P = np.stack([X, Y], -1)
    w = np.exp(-(spec.potential.value(P) - umin) / eps)
    if valley is not None:
        inside = valley.contains(P.reshape(-1, 2)).reshape(w.shape)
        U = spec.potential.value(P)
        w = w * (inside & (U <= valley.level))
    return float(integrate.trapezoid(integrate.trapezoid(w, ys, axis=1), xs))


def gibbs_valley_mass(spec: PotentialSpec, valley: Valley | None, epsilon: float) -> tuple[float, float]:
    """(mass of the valley, mass of the box) of exp(-(U - min U)/eps).

    ``valley=None`` returns the box mass twice.  Both numbers share the same
    shift by the lowest minimum so their ratio is the Gibbs probability.
    """
    if not spec.analytic:
        raise TypeError("Gibbs masses need an analytic landscape")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    umin = _floor(spec)
    if spec.dim == 1:
        (lo, hi), = spec.box
        total = _quad_1d(spec, lo, hi, epsilon, umin)
        if valley is None:
            return total, total
        a, b = valley.interval
        return _quad_1d(spec, a, b, epsilon, umin), total
    # 2D: trapezoid on successively refined grids until two levels agree
    prev = None
    for n in (201, 401, 801, 1601):
        cur = (_grid_mass_2d(spec, epsilon, umin, n, valley), _grid_mass_2d(spec, epsilon, umin, n, None))
        if prev is not None and all(abs(c - p) <= 1e-3 * c for c, p in zip(cur, prev)):
            return cur
        prev = cur
    raise QuadratureNotConverged("2D Gibbs mass did not settle up to a 1601-point grid")


def basin_intervals(spec: PotentialSpec) -> dict:
    """1D attraction basins: each minimum owns the interval between its flanking saddles."""
    if spec.dim != 1:
        raise NotImplementedError("basins are only tabulated for 1D landscapes")
    g = graph_of(spec)
    (lo, hi), = spec.box
    cuts = sorted(s.position[0] for s in g.saddles)
    out = {}
    for m in g.minima:
        x = m.position[0]
        left = max([c for c in cuts if c < x], default=lo)
        right = min([c for c in cuts if c > x], default=hi)
        out[m.id] = (left, right)
    return out


def cell_masses(spec: PotentialSpec, valleys: dict, epsilon: float,
                region: Sequence | None = None) -> dict:
    """Gibbs probabilities of each valley and of the transit remainder.

    ``region`` (1D only) is a list of disjoint intervals to condition on,
    e.g. the basins of a set of minima.  Keys are the valley owners plus
    ``"transit"``.
    """
    umin = _floor(spec)
    if spec.dim == 1:
        (lo, hi), = spec.box
        parts = list(region) if region is not None else [(lo, hi)]
        total = sum(_quad_1d(spec, a, b, epsilon, umin) for a, b in parts)
        out = {}
        for m, v in valleys.items():
            mass = 0.0
            for a, b in parts:
                va, vb = max(a, v.interval[0]), min(b, v.interval[1])
                if vb > va:
                    mass += _quad_1d(spec, va, vb, epsilon, umin)
            out[m] = mass / total
    else:
        if region is not None:
            raise NotImplementedError("conditioned cell masses are 1D only")
        out = {}
        for m, v in valleys.items():
            mass, total = gibbs_valley_mass(spec, v, epsilon)
            out[m] = mass / total
    out["transit"] = max(0.0, 1.0 - sum(out.values()))
    return out


# ---------------------------------------------------------------------------
# landscape files
# ---------------------------------------------------------------------------
def _schema() -> dict:
    from importlib.resources import files

    return json.loads(files("metastate").joinpath("schemas/landscape.schema.json").read_text())


def spec_from_dict(doc: dict, name: str = "") -> PotentialSpec:
    import jsonschema

    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        raise LandscapeValidationError(f"landscape document: {exc.message}") from None
    kind = doc["kind"]
    if kind == "critical-graph":
        graph = LandscapeGraph.from_dict(doc)
        return PotentialSpec(kind, graph=graph, name=doc.get("name", name), source=dict(doc))
    dim = 1 if kind == "analytic-1d" else 2
    pot = Potential.from_expressions(dim, doc["potential"], grad=doc.get("grad"), ell=doc.get("ell"))
    box = doc["box"]
    if dim == 1 and not isinstance(box[0], list):
        box = [box]
    return PotentialSpec(kind, potential=pot, box=tuple(tuple(b) for b in box), grid=doc.get("grid"),
                         name=doc.get("name", name), source=dict(doc))


def load_landscape(path: str | Path) -> PotentialSpec:
    path = Path(path)
    return spec_from_dict(json.loads(path.read_text()), name=path.stem)


def spec_to_dict(spec: PotentialSpec) -> dict:
    if spec.kind == "critical-graph":
        return {"kind": spec.kind, "name": spec.name, **spec.graph.to_dict()}
    d = {"kind": spec.kind, "name": spec.name, "potential": spec.potential.source["u"],
         "box": [list(b) for b in spec.box]}
    for key in ("grad", "ell"):
        if key in spec.potential.source:
            d[key] = spec.potential.source[key]
    if spec.grid:
        d["grid"] = spec.grid
    return d


def with_graph(spec: PotentialSpec, graph: LandscapeGraph) -> PotentialSpec:
    """Copy of an analytic PotentialSpec with a precomputed graph attached."""
    src = dict(spec.source)
    src["_graph"] = graph
    return replace(spec, source=src)
