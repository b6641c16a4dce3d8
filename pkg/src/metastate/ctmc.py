"""Small dense continuous-time Markov chains.

Chains here live on at most a few dozen labeled states (sets of minima), so
everything is dense linear algebra.  States are arbitrary hashable labels.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.stats import poisson

from .errors import (
    AbsorbedOutsideTargets,
    InvalidWeights,
    StationarityMismatch,
    TraceIllPosed,
)

ROW_SUM_TOL = 1e-12
NORM_TOL = 1e-12
UNIFORM_TAIL = 1e-12
# largest lambda*t handled in one uniformization pass; longer times are
# reached by squaring the substep matrix
MAX_SUBSTEP = 32.0


@dataclass(frozen=True, eq=False)
class Ctmc:
    """Generator ``Q`` over ordered ``states``; rows sum to zero."""

    states: tuple
    Q: np.ndarray

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        n = len(self.states)
        if Q.shape != (n, n):
            raise ValueError(f"generator shape {Q.shape} does not match {n} states")
        if len(set(self.states)) != n:
            raise ValueError("duplicate state labels")
        off = Q - np.diag(np.diag(Q))
        if np.any(off < 0):
            raise ValueError("negative off-diagonal rate")
        scale = max(1.0, float(np.max(np.abs(Q)))) if n else 1.0
        if n and np.max(np.abs(Q.sum(axis=1))) > ROW_SUM_TOL * scale:
            raise ValueError("generator rows do not sum to zero")
        Q.setflags(write=False)
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "_pos", {s: i for i, s in enumerate(self.states)})

    @classmethod
    def from_rates(cls, states: Sequence[Hashable], rates: Mapping[tuple, float]) -> "Ctmc":
        """Build from off-diagonal rates ``{(x, y): r}``; self-loops are dropped."""
        states = tuple(states)
        pos = {s: i for i, s in enumerate(states)}
        Q = np.zeros((len(states), len(states)))
        for (x, y), r in rates.items():
            if x == y or r == 0:
                continue
            Q[pos[x], pos[y]] += r
        np.fill_diagonal(Q, -Q.sum(axis=1))
        return cls(states, Q)

    @property
    def n(self) -> int:
        return len(self.states)

    def index(self, state) -> int:
        return self._pos[state]

    def rate(self, x, y) -> float:
        return float(self.Q[self._pos[x], self._pos[y]]) if x != y else 0.0

    def rates(self) -> dict:
        """Positive off-diagonal rates as a dict."""
        out = {}
        for i, x in enumerate(self.states):
            for j, y in enumerate(self.states):
                if i != j and self.Q[i, j] > 0:
                    out[(x, y)] = float(self.Q[i, j])
        return out

    def jump_matrix(self) -> np.ndarray:
        """Embedded jump chain; absorbing rows stay put."""
        exit_rate = -np.diag(self.Q)
        P = np.zeros_like(self.Q)
        for i in range(self.n):
            if exit_rate[i] > 0:
                P[i] = self.Q[i] / exit_rate[i]
                P[i, i] = 0.0
            else:
                P[i, i] = 1.0
        return P

    def to_dict(self) -> dict:
        return {"states": [list(s) if isinstance(s, (frozenset, tuple)) else s for s in self.states],
                "Q": self.Q.tolist()}


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability vector over labeled states."""

    states: tuple
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != (len(self.states),):
            raise ValueError("weights do not match support")
        if np.any(w < -NORM_TOL):
            raise InvalidWeights("negative probability")
        w = np.clip(w, 0.0, None)
        if abs(w.sum() - 1.0) > NORM_TOL * max(1, len(w)):
            raise InvalidWeights(f"weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "weights", w)

    @classmethod
    def delta(cls, states: Sequence, at) -> "DiscreteMeasure":
        states = tuple(states)
        w = np.zeros(len(states))
        w[states.index(at)] = 1.0
        return cls(states, w)

    @classmethod
    def from_dict(cls, mapping: Mapping) -> "DiscreteMeasure":
        return cls(tuple(mapping), np.array(list(mapping.values()), dtype=float))

    def __getitem__(self, state) -> float:
        try:
            return float(self.weights[self.states.index(state)])
        except ValueError:
            return 0.0

    def aligned(self, states: Sequence) -> np.ndarray:
        """Weights reordered onto ``states``; states outside the support get 0."""
        extra = set(self.states) - set(states)
        if any(self[s] > 0 for s in extra):
            raise ValueError("measure charges states outside the requested universe")
        return np.array([self[s] for s in states])

    def as_dict(self) -> dict:
        return dict(zip(self.states, self.weights.tolist()))


def _poisson_weights(lam_t: float) -> np.ndarray:
    kmax = int(poisson.isf(UNIFORM_TAIL / 2, lam_t)) + 2
    return poisson.pmf(np.arange(kmax + 1), lam_t)


def transition_matrix(chain: Ctmc, t: float) -> np.ndarray:
    """exp(tQ) by uniformization with scaling and squaring.

    A substep ``tau = t / 2**j`` keeps ``lambda*tau <= MAX_SUBSTEP`` so the
    Poisson series for the substep is short and its truncated tail is below
    ``UNIFORM_TAIL``; the result is then squared ``j`` times.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    n = chain.n
    if t == 0 or n == 0:
        return np.eye(n)
    lam = max(float(np.max(-np.diag(chain.Q))), 1e-300)
    j = max(0, math.ceil(math.log2(lam * t / MAX_SUBSTEP))) if lam * t > MAX_SUBSTEP else 0
    tau = t / 2.0 ** j
    K = np.eye(n) + chain.Q / lam
    w = _poisson_weights(lam * tau)
    P = np.zeros((n, n))
    term = np.eye(n)
    for k, wk in enumerate(w):
        if k:
            term = term @ K
        P += wk * term
    # renormalize the truncated tail back onto the rows (mass defect < 1e-12)
    P /= P.sum(axis=1, keepdims=True)
    for _ in range(j):
        P = P @ P
    return P


def transition_probabilities(chain: Ctmc, mu0: DiscreteMeasure, t: float) -> DiscreteMeasure:
    """Law at time ``t`` of the chain started from ``mu0``."""
    v = mu0.aligned(chain.states)
    if t == 0:
        return DiscreteMeasure(chain.states, v)
    out = v @ transition_matrix(chain, t)
    out = np.clip(out, 0.0, None)
    return DiscreteMeasure(chain.states, out / out.sum())


def _reach(adj: np.ndarray, start: Iterable[int], blocked: set = frozenset()) -> set:
    seen = set(start)
    stack = [i for i in seen if i not in blocked]
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adj[i]):
            j = int(j)
            if j not in seen:
                seen.add(j)
                if j not in blocked:
                    stack.append(j)
    return seen


def _solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    lu, piv = sla.lu_factor(A)
    cond = np.linalg.cond(A) if A.size else 1.0
    if cond > 1e12:
        warnings.warn(f"ill-conditioned hitting system (cond {cond:.2e})", RuntimeWarning, stacklevel=3)
    return sla.lu_solve((lu, piv), B)


def _absorption(chain: Ctmc, targets: Sequence[int], sources: Sequence[int]) -> np.ndarray:
    """Rows: probability that the chain from each source first enters ``targets`` at each target.

    Sources inside ``targets`` get a unit row.  Raises if some state reachable
    from a source (before entering targets) cannot reach them.
    """
    tset = set(targets)
    adj = (chain.Q > 0) & ~np.eye(chain.n, dtype=bool)
    region = _reach(adj, [s for s in sources if s not in tset], blocked=tset) - tset
    can_hit = _reach(adj.T, tset)
    bad = region - can_hit
    if bad:
        names = [chain.states[i] for i in sorted(bad)]
        raise AbsorbedOutsideTargets(f"states {names} cannot reach the targets")
    out = np.zeros((len(sources), len(targets)))
    inner = sorted(region)
    if inner:
        P = chain.jump_matrix()
        ii = np.array(inner)
        tt = np.array(list(targets))
        H = _solve(np.eye(len(inner)) - P[np.ix_(ii, ii)], P[np.ix_(ii, tt)])
        row_of = {s: k for k, s in enumerate(inner)}
    tpos = {s: k for k, s in enumerate(targets)}
    for r, s in enumerate(sources):
        if s in tset:
            out[r, tpos[s]] = 1.0
        else:
            out[r] = H[row_of[s]]
    out = np.clip(out, 0.0, None)
    return out / out.sum(axis=1, keepdims=True)


def hitting_distribution(chain: Ctmc, start, targets: Iterable) -> DiscreteMeasure:
    """Law of the first target state visited from ``start``."""
    targets = [s for s in chain.states if s in set(targets)]
    if not targets:
        raise ValueError("empty target set")
    row = _absorption(chain, [chain.index(s) for s in targets], [chain.index(start)])[0]
    return DiscreteMeasure(tuple(targets), row)


def classify(chain: Ctmc) -> tuple[list[tuple], tuple]:
    """Closed communicating classes and transient states.

    Classes and their members follow the chain's state order.
    """
    from scipy.sparse.csgraph import connected_components

    adj = (chain.Q > 0) & ~np.eye(chain.n, dtype=bool)
    ncomp, label = connected_components(adj.astype(np.int8), directed=True, connection="strong")
    leaves = np.ones(ncomp, dtype=bool)
    for i, j in zip(*np.nonzero(adj)):
        if label[i] != label[j]:
            leaves[label[i]] = False
    seen, closed = set(), []
    for i in range(chain.n):
        c = label[i]
        if leaves[c] and c not in seen:
            seen.add(c)
            closed.append(tuple(chain.states[k] for k in range(chain.n) if label[k] == c))
    transient = tuple(chain.states[k] for k in range(chain.n) if not leaves[label[k]])
    return closed, transient


def trace_chain(chain: Ctmc, F: Iterable) -> Ctmc:
    """Generator of the chain watched only while it sits in ``F``."""
    Fset = set(F)
    if not Fset:
        raise TraceIllPosed("empty trace set")
    if not Fset <= set(chain.states):
        raise TraceIllPosed("trace set is not a subset of the states")
    closed, _ = classify(chain)
    for cls in closed:
        if not Fset.intersection(cls):
            raise TraceIllPosed(f"closed class {list(cls)} misses the trace set")
    keep = [i for i, s in enumerate(chain.states) if s in Fset]
    rest = [i for i, s in enumerate(chain.states) if s not in Fset]
    Q = chain.Q
    R = Q[np.ix_(keep, keep)].copy()
    if rest:
        H = _absorption(chain, keep, rest)
        R += Q[np.ix_(keep, rest)] @ H
    np.fill_diagonal(R, 0.0)
    np.fill_diagonal(R, -R.sum(axis=1))
    return Ctmc(tuple(chain.states[i] for i in keep), R)


def null_space_stationary(chain: Ctmc, cls: Sequence) -> np.ndarray:
    idx = [chain.index(s) for s in cls]
    Qc = chain.Q[np.ix_(idx, idx)]
    k = len(idx)
    A = np.vstack([Qc.T, np.ones((1, k))])
    b = np.zeros(k + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def stationary_within(
    chain: Ctmc,
    cls: Sequence,
    weights: Mapping | None = None,
    strict: bool = False,
    tol: float = 1e-10,
) -> DiscreteMeasure:
    """Invariant law of a closed class.

    With ``weights`` the weight-proportional law is tried first and checked
    against ``mu Q = 0``; if the check fails it raises when ``strict`` and
    otherwise falls back to the null-space solution.
    """
    cls = tuple(cls)
    idx = [chain.index(s) for s in cls]
    Qc = chain.Q[np.ix_(idx, idx)]
    if np.max(np.abs(Qc.sum(axis=1))) > 1e-9 * max(1.0, float(np.max(np.abs(Qc)))):
        raise ValueError("class is not closed")
    if weights is not None:
        w = np.array([float(weights[s]) for s in cls])
        if np.any(w <= 0):
            raise InvalidWeights("class weights must be positive")
        mu = w / w.sum()
        resid = float(np.max(np.abs(mu @ Qc))) if len(cls) > 1 else 0.0
        scale = max(1.0, float(np.max(np.abs(Qc))))
        if resid <= tol * scale:
            return DiscreteMeasure(cls, mu)
        if strict:
            raise StationarityMismatch(f"weighted law is not invariant (residual {resid:.3e})")
    return DiscreteMeasure(cls, null_space_stationary(chain, cls))


def long_run_distribution(chain: Ctmc, mu0: DiscreteMeasure) -> DiscreteMeasure:
    """lim_{t->inf} mu0 exp(tQ): absorption into closed classes times their invariant laws."""
    closed, _ = classify(chain)
    v = mu0.aligned(chain.states)
    out = np.zeros(chain.n)
    members = [s for c in closed for s in c]
    idx = [chain.index(s) for s in members]
    absorb = _absorption(chain, idx, list(range(chain.n)))
    hit = v @ absorb
    where = dict(zip(members, hit))
    for c in closed:
        mass = sum(where[s] for s in c)
        if mass == 0:
            continue
        pi = null_space_stationary(chain, c)
        for s, p in zip(c, pi):
            out[chain.index(s)] += mass * p
    return DiscreteMeasure(chain.states, out / out.sum())
