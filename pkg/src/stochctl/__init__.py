"""Optimal probabilities of temporal-logic events on finite controlled Markov models."""

from .automata import BoundedReach, Buchi, DetAutomaton, Rabin, Reach, parse_automaton, run, serialize_automaton
from .errors import ConvergenceError, ParseError, StochCtlError, UnsupportedError, ValidationError
from .ltl import classify, parse_ltl, scltl_to_dfa, semantics_eval, to_nnf
from .mdp import ActionSet, GridModel, Labeling, MarkovPolicy, StateGrid, bellman_max, bellman_min
from .product import compose, project_policy, target_sets
from .reachability import (
    AbsorbenceReport,
    ExcessiveCertificate,
    ReachSpec,
    ValueResult,
    absorbing_analysis,
    contraction_error_bound,
    dp_step,
    reach_bounded,
    reach_unbounded,
    safety_bounded,
    safety_unbounded,
    truncated_reach,
    verify_excessive,
)
from .persistence import buchi_value, persistence_truncated, persistence_value

__version__ = "0.1.0"

__all__ = [
    "BoundedReach",
    "Buchi",
    "DetAutomaton",
    "Rabin",
    "Reach",
    "parse_automaton",
    "run",
    "serialize_automaton",
    "ConvergenceError",
    "ParseError",
    "StochCtlError",
    "UnsupportedError",
    "ValidationError",
    "classify",
    "parse_ltl",
    "scltl_to_dfa",
    "semantics_eval",
    "to_nnf",
    "ActionSet",
    "GridModel",
    "Labeling",
    "MarkovPolicy",
    "StateGrid",
    "bellman_max",
    "bellman_min",
    "compose",
    "project_policy",
    "target_sets",
    "AbsorbenceReport",
    "ExcessiveCertificate",
    "ReachSpec",
    "ValueResult",
    "absorbing_analysis",
    "contraction_error_bound",
    "dp_step",
    "reach_bounded",
    "reach_unbounded",
    "safety_bounded",
    "safety_unbounded",
    "truncated_reach",
    "verify_excessive",
    "buchi_value",
    "persistence_truncated",
    "persistence_value",
]
