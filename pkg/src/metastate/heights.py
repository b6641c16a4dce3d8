"""Barrier heights on the minimum-saddle graph.

Communication heights come from one Kruskal sweep: saddles sorted by energy
merge wells with a union-find, and the energy of the merge is the minimax
height for every pair it joins for the first time.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

from .errors import Disconnected, GenericityWarning, NotSimple
from .landscape import LandscapeGraph

ENERGY_TOL = 1e-9
# gaps above ENERGY_TOL but below this are reported as near-ties
NEAR_TIE = 1e-6
INF = math.inf


def energy_eq(a: float, b: float) -> bool:
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= ENERGY_TOL


def energy_lt(a: float, b: float) -> bool:
    if math.isinf(b):
        return not math.isinf(a)
    if math.isinf(a):
        return False
    return a < b - ENERGY_TOL


class _UnionFind:
    def __init__(self, items: Iterable):
        self.parent = {x: x for x in items}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        # deterministic root choice keeps cluster ids stable across runs
        if str(ra) < str(rb):
            ra, rb = rb, ra
        self.parent[ra] = rb
        return True


@dataclass(frozen=True)
class GateSet:
    source: frozenset
    target: frozenset
    saddles: frozenset
    height: float

    def __bool__(self):
        return bool(self.saddles)


@dataclass(eq=False)
class HeightIndex:
    """Pairwise communication heights and sub-level reachability for one graph."""

    graph: LandscapeGraph
    theta: dict = field(init=False, repr=False)
    _lower_clusters: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        g = self.graph
        mins = [m.id for m in g.minima]
        uf = _UnionFind(mins)
        members = {m: {m} for m in mins}
        theta = {(m, m): g.value(m) for m in mins}
        for s in sorted(g.saddles, key=lambda s: (s.value, str(s.id))):
            a, b = g.targets(s.id)
            ra, rb = uf.find(a), uf.find(b)
            if ra == rb:
                continue
            for x in members[ra]:
                for y in members[rb]:
                    theta[(x, y)] = theta[(y, x)] = s.value
            uf.union(ra, rb)
            root = uf.find(ra)
            merged = members.pop(ra) | members.pop(rb)
            members[root] = merged
        if len(members) > 1:
            raise Disconnected(f"minimum-saddle graph has {len(members)} components")
        self.theta = theta
        self._warn_near_ties()

    def _warn_near_ties(self):
        vals = sorted({round(p.value, 15) for p in self.graph.points})
        close = [(a, b) for a, b in zip(vals, vals[1:]) if ENERGY_TOL < b - a < NEAR_TIE]
        if close:
            warnings.warn(
                f"critical values {close[0]} differ by less than {NEAR_TIE:g}; "
                "tie handling may not reflect the intended landscape",
                GenericityWarning,
                stacklevel=3,
            )

    # -- pair and set heights ------------------------------------------------
    def pair(self, m, m2) -> float:
        return self.theta[(m, m2)]

    def set_height(self, A: Iterable, B: Iterable) -> float:
        A, B = list(A), list(B)
        if not B:
            return INF
        return min(self.theta[(a, b)] for a in A for b in B)

    def level(self, M: Iterable) -> float:
        """Common energy of a simple set."""
        vals = [self.graph.value(m) for m in M]
        if not vals:
            raise NotSimple("empty set")
        if max(vals) - min(vals) > ENERGY_TOL:
            raise NotSimple(f"set {sorted(map(str, M))} spans energies {min(vals)}..{max(vals)}")
        return min(vals)

    def lower_or_equal(self, M: Iterable) -> frozenset:
        """Minima outside ``M`` at or below its level."""
        M = frozenset(M)
        u = self.level(M)
        return frozenset(m.id for m in self.graph.minima
                         if m.id not in M and (m.value <= u or energy_eq(m.value, u)))

    def exit_height(self, M: Iterable) -> float:
        M = frozenset(M)
        return self.set_height(M, self.lower_or_equal(M))

    def xi(self, M: Iterable) -> float:
        M = frozenset(M)
        h = self.exit_height(M)
        return INF if math.isinf(h) else h - self.level(M)

    # -- reachability below a saddle ------------------------------------------
    def _clusters_below(self, level: float) -> _UnionFind:
        key = round(level, 12)
        uf = self._lower_clusters.get(key)
        if uf is None:
            uf = _UnionFind([m.id for m in self.graph.minima])
            for s in self.graph.saddles:
                if energy_lt(s.value, level):
                    uf.union(*self.graph.targets(s.id))
            self._lower_clusters[key] = uf
        return uf

    def leads_to(self, sigma, M: Iterable) -> bool:
        M = set(M)
        targets = self.graph.targets(sigma)
        if M.intersection(targets):
            return True
        uf = self._clusters_below(self.graph.value(sigma))
        roots = {uf.find(t) for t in targets}
        return any(uf.find(m) in roots for m in M)

    def gate_set(self, M: Iterable, M2: Iterable) -> GateSet:
        M, M2 = frozenset(M), frozenset(M2)
        if M & M2:
            raise ValueError("gate endpoints must be disjoint")
        self.level(M)
        h = self.exit_height(M)
        h2 = self.set_height(M, M2)
        if math.isinf(h) or not energy_eq(h, h2):
            return GateSet(M, M2, frozenset(), INF)
        gates = frozenset(
            s.id for s in self.graph.saddles
            if energy_eq(s.value, h)
            and M2.intersection(self.graph.targets(s.id))
            and self.leads_to(s.id, M)
        )
        return GateSet(M, M2, gates, h if gates else INF)


@lru_cache(maxsize=32)
def _index_for(graph: LandscapeGraph) -> HeightIndex:
    return HeightIndex(graph)


def build_index(graph: LandscapeGraph) -> HeightIndex:
    return _index_for(graph)


def communication_height(graph: LandscapeGraph, m, m2) -> float:
    if m == m2:
        raise ValueError("communication height needs two distinct minima")
    return build_index(graph).pair(m, m2)


def set_height(graph: LandscapeGraph, index: HeightIndex, A, B) -> float:
    return index.set_height(A, B)


def xi_depth(graph: LandscapeGraph, index: HeightIndex, M) -> float:
    return index.xi(M)


def leads_to(graph: LandscapeGraph, sigma, M) -> bool:
    return build_index(graph).leads_to(sigma, M)


def gate_set(graph: LandscapeGraph, index: HeightIndex, M, M2) -> GateSet:
    return index.gate_set(M, M2)
