"""Metastable hierarchies of reversible-plus-drift diffusions on energy landscapes.

Critical-point graphs, communication heights, the tree of reduced Markov
chains, total-variation plateaus and mixing times, and an Euler-Maruyama
ensemble to check them against.
"""
from .ctmc import Ctmc, DiscreteMeasure, hitting_distribution, trace_chain, transition_probabilities
from .errors import GenericityError, GenericityWarning, MetastateError
from .heights import communication_height, gate_set, leads_to, set_height, xi_depth
from .landscape import (
    CriticalPoint,
    LandscapeGraph,
    Potential,
    PotentialSpec,
    find_critical_points,
    gibbs_valley_mass,
    graph_of,
    load_landscape,
    valley_of,
)
from .tree import TreeStructure, build_tree, check_tree
from .tvmix import chain_mixing_time, f_curve, plateau, predict_diffusion, tv_conditioned_limit

__version__ = "0.1.0"

__all__ = [
    "Ctmc", "DiscreteMeasure", "hitting_distribution", "trace_chain", "transition_probabilities",
    "GenericityError", "GenericityWarning", "MetastateError",
    "communication_height", "gate_set", "leads_to", "set_height", "xi_depth",
    "CriticalPoint", "LandscapeGraph", "Potential", "PotentialSpec", "find_critical_points",
    "gibbs_valley_mass", "graph_of", "load_landscape", "valley_of",
    "TreeStructure", "build_tree", "check_tree",
    "chain_mixing_time", "f_curve", "plateau", "predict_diffusion", "tv_conditioned_limit",
]
