"""Hierarchical reduction of the minimum-saddle graph into nested Markov chains.

Layer 1 lives on single minima.  Each following layer merges the closed
classes of the previous reduced chain into single states, keeps transient
and previously negligible states as negligible, and rebuilds rates from the
gate saddles at the new depth.  The recursion stops once the reduced chain
has one closed class.

States are ``frozenset`` of minimum ids throughout.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .ctmc import Ctmc, classify, stationary_within, trace_chain
from .errors import (
    GenericityError,
    GenericityWarning,
    NoFiniteDepth,
    TraceIllPosed,
    TreeInvariantViolation,
)
from .heights import ENERGY_TOL, HeightIndex, energy_eq, energy_lt
from .landscape import LandscapeGraph, ek_weight, nu_weight


def state_label(M) -> str:
    """Stable printable label, e.g. ``{m1,m2}``."""
    return "{" + ",".join(sorted(M, key=_natural)) + "}"


def _natural(s: str):
    head = s.rstrip("0123456789")
    tail = s[len(head):]
    return (head, int(tail) if tail else -1, s)


def _sorted_states(states) -> list:
    return sorted(states, key=lambda M: [_natural(m) for m in sorted(M, key=_natural)])


@dataclass(frozen=True, eq=False)
class Layer:
    index: int
    depth: float
    metastable: tuple  # V^(p), states kept by the reduced chain
    negligible: tuple  # N^(p)
    aux_chain: Ctmc  # on metastable + negligible
    chain: Ctmc  # trace of aux_chain on metastable
    classes: tuple  # closed classes of ``chain``, each a tuple of states
    transient: tuple
    convention_mismatch: tuple = ()

    @property
    def states(self) -> tuple:
        return self.metastable + self.negligible

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def state_of(self, m) -> frozenset:
        for M in self.states:
            if m in M:
                return M
        raise KeyError(m)

    def to_dict(self) -> dict:
        lab = state_label
        return {
            "index": self.index,
            "depth": self.depth,
            "metastable": [lab(M) for M in self.metastable],
            "negligible": [lab(M) for M in self.negligible],
            "classes": [[lab(M) for M in c] for c in self.classes],
            "transient": [lab(M) for M in self.transient],
            "aux_rates": [[lab(x), lab(y), r] for (x, y), r in self.aux_chain.rates().items()],
            "rates": [[lab(x), lab(y), r] for (x, y), r in self.chain.rates().items()],
        }


@dataclass(frozen=True, eq=False)
class TreeStructure:
    graph: LandscapeGraph
    index: HeightIndex
    layers: tuple
    m_star: frozenset
    nu_star: float
    top_state: frozenset  # merged single class of the last layer
    top_negligible: tuple
    warnings: tuple = field(default=())

    @property
    def q(self) -> int:
        return len(self.layers)

    @property
    def depths(self) -> list:
        return [L.depth for L in self.layers]

    def layer(self, p: int) -> Layer:
        return self.layers[p - 1]

    def nu(self, M) -> float:
        return sum(nu_weight(self.graph.point(m)) for m in M)

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "depths": self.depths,
            "m_star": sorted(self.m_star, key=_natural),
            "nu_star": self.nu_star,
            "layers": [L.to_dict() for L in self.layers],
            "warnings": list(self.warnings),
        }


def _nu(graph: LandscapeGraph, M) -> float:
    return sum(nu_weight(graph.point(m)) for m in M)


def _case3_rates(graph, index, sources, states, depth) -> dict:
    """Rates out of metastable states through their gate saddles at ``depth``."""
    rates = {}
    for M in sources:
        if not energy_eq(index.xi(M), depth):
            continue
        nu = _nu(graph, M)
        total = 0.0
        for M2 in states:
            if M2 == M:
                continue
            gate = index.gate_set(M, M2)
            w = sum(ek_weight(graph.point(s)) for s in gate.saddles)
            if w > 0:
                rates[(M, M2)] = w / nu
                total += w
        if total == 0:
            warnings.warn(f"state {state_label(M)} has depth {depth} but no exit gate",
                          GenericityWarning, stacklevel=3)
    return rates


def _finish_layer(p, depth, V, N, aux_rates, mismatch=()) -> Layer:
    V, N = tuple(_sorted_states(V)), tuple(_sorted_states(N))
    aux = Ctmc.from_rates(V + N, aux_rates)
    closed_aux, _ = classify(aux)
    for cls in closed_aux:
        if not set(cls) & set(V):
            raise TraceIllPosed(f"closed class {[state_label(M) for M in cls]} of layer {p} has no metastable state")
    chain = trace_chain(aux, V) if N else aux
    classes, transient = classify(chain)
    return Layer(p, depth, V, N, aux, chain, tuple(classes), tuple(transient), tuple(mismatch))


def build_layer1(graph: LandscapeGraph, index: HeightIndex) -> Layer:
    mins = [m.id for m in graph.minima]
    xi = {m: index.xi([m]) for m in mins}
    finite = [x for x in xi.values() if math.isfinite(x)]
    if not finite:
        raise NoFiniteDepth("no minimum has a finite depth")
    d1 = min(finite)
    if not d1 > ENERGY_TOL:
        raise TreeInvariantViolation(f"first depth {d1} is not positive")
    rates = {}
    for m in mins:
        if not energy_eq(xi[m], d1):
            continue
        lvl = graph.value(m) + xi[m]
        for s in graph.saddles:
            tg = graph.targets(s.id)
            if m not in tg or not energy_eq(s.value, lvl):
                continue
            other = tg[1] if tg[0] == m else tg[0]
            key = (frozenset([m]), frozenset([other]))
            rates[key] = rates.get(key, 0.0) + ek_weight(s) / nu_weight(graph.point(m))
    # the same layer through the set-level gate rule, to flag disagreements
    singles = [frozenset([m]) for m in mins]
    generic = _case3_rates(graph, index, singles, singles, d1)
    mismatch = []
    for key in sorted(set(rates) | set(generic), key=lambda k: (state_label(k[0]), state_label(k[1]))):
        a, b = rates.get(key, 0.0), generic.get(key, 0.0)
        if abs(a - b) > 1e-12 * max(1.0, a, b):
            mismatch.append((state_label(key[0]), state_label(key[1]), a, b))
    if mismatch:
        warnings.warn(
            f"first-layer rates from direct arrows and from gate sets differ on {len(mismatch)} pairs; "
            "direct-arrow rates are used", GenericityWarning, stacklevel=2)
    return _finish_layer(1, d1, singles, [], rates, mismatch)


def build_next_layer(graph: LandscapeGraph, index: HeightIndex, prev: Layer) -> Layer:
    if prev.n_classes <= 1:
        raise ValueError("previous layer already has a single class")
    merged = {M: frozenset().union(*cls) for cls in prev.classes for M in cls}
    V = [frozenset().union(*cls) for cls in prev.classes]
    N = list(prev.negligible) + list(prev.transient)
    xi = {M: index.xi(M) for M in V}
    finite = [x for x in xi.values() if math.isfinite(x)]
    if not finite:
        raise NoFiniteDepth(f"layer {prev.index + 1}: every merged state has infinite depth")
    d = min(finite)
    if energy_eq(d, prev.depth):
        raise GenericityError(
            f"depth of layer {prev.index + 1} ties with layer {prev.index} ({d} vs {prev.depth}); no valley radius fits")
    if energy_lt(d, prev.depth):
        raise TreeInvariantViolation(f"depth decreased from {prev.depth} to {d}")
    # cases 1 and 2: negligible states keep their previous rates, with targets
    # inside a merged class redirected to the merged state
    rates: dict = {}
    for Nst in N:
        for (x, y), r in prev.aux_chain.rates().items():
            if x != Nst:
                continue
            y2 = merged.get(y, y)
            rates[(Nst, y2)] = rates.get((Nst, y2), 0.0) + r
    # case 3
    rates.update(_case3_rates(graph, index, V, V + N, d))
    return _finish_layer(prev.index + 1, d, V, N, rates)


def validate_simple_bound(layer: Layer, index: HeightIndex) -> dict:
    """Per-state flags ``{label: {"simple": bool, "bound": bool}}``."""
    report = {}
    for M in layer.states:
        vals = [index.graph.value(m) for m in M]
        simple = max(vals) - min(vals) <= ENERGY_TOL
        if simple:
            inner = max((index.pair(a, b) for a in M for b in M), default=-math.inf)
            bound = energy_lt(inner, index.exit_height(M))
        else:
            bound = False
        report[state_label(M)] = {"simple": bool(simple), "bound": bool(bound)}
    return report


def build_tree(graph: LandscapeGraph, index: HeightIndex | None = None) -> TreeStructure:
    index = index or HeightIndex(graph)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", GenericityWarning)
        layers = [build_layer1(graph, index)]
        while layers[-1].n_classes > 1:
            if len(layers) > len(graph.minima):
                raise TreeInvariantViolation("recursion did not terminate")
            layers.append(build_next_layer(graph, index, layers[-1]))
    notes = []
    for w in caught:
        if issubclass(w.category, GenericityWarning):
            notes.append(str(w.message))
        warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    last = layers[-1]
    top = frozenset().union(*last.classes[0])
    tree = TreeStructure(
        graph=graph,
        index=index,
        layers=tuple(layers),
        m_star=top,
        nu_star=_nu(graph, top),
        top_state=top,
        top_negligible=tuple(last.negligible) + tuple(last.transient),
        warnings=tuple(notes),
    )
    check_tree(tree)
    return tree


def check_tree(tree: TreeStructure) -> None:
    """Structural invariants of a finished tree; raises TreeInvariantViolation."""
    g, idx = tree.graph, tree.index
    all_min = frozenset(m.id for m in g.minima)
    d = tree.depths
    if not (d[0] > 0 and all(energy_lt(a, b) for a, b in zip(d, d[1:])) and math.isfinite(d[-1])):
        raise TreeInvariantViolation(f"depths are not strictly increasing: {d}")
    ns = [L.n_classes for L in tree.layers]
    if not (all(a > b for a, b in zip(ns, ns[1:])) and ns[-1] == 1):
        raise TreeInvariantViolation(f"class counts do not decrease to one: {ns}")
    if tree.m_star != g.global_minima(ENERGY_TOL):
        raise TreeInvariantViolation(
            f"top class {state_label(tree.m_star)} differs from the global minima {state_label(g.global_minima())}")
    for L in tree.layers:
        union = [m for M in L.states for m in M]
        if len(union) != len(set(union)) or set(union) != all_min:
            raise TreeInvariantViolation(f"layer {L.index} states do not partition the minima")
        rep = validate_simple_bound(L, idx)
        bad = [k for k, v in rep.items() if not (v["simple"] and v["bound"])]
        if bad:
            raise TreeInvariantViolation(f"layer {L.index}: states {bad} are not simple and bound")
        star = [M for M in L.metastable if M <= tree.m_star]
        if not star or frozenset().union(*star) != tree.m_star:
            raise TreeInvariantViolation(f"layer {L.index}: global minima are not a union of metastable states")
        for cls in L.classes:
            stationary_within(L.chain, cls, {M: tree.nu(M) for M in cls}, strict=True, tol=1e-9)
    for a, b in zip(tree.layers, tree.layers[1:]):
        for M in a.states:
            hosts = [B for B in b.states if M <= B]
            if len(hosts) != 1:
                raise TreeInvariantViolation(f"state {state_label(M)} is not refined by layer {b.index}")


def tree_from_graph(graph: LandscapeGraph) -> TreeStructure:
    return build_tree(graph, HeightIndex(graph))


def layer_rate_matrix(layer: Layer, aux: bool = False) -> np.ndarray:
    return (layer.aux_chain if aux else layer.chain).Q.copy()
