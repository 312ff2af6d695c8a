"""Monotone learning for mean field games on lattices of measure flows.

Submodules:

* ``stochorder``: sub-probability measures under first-order stochastic dominance
* ``engine``: best-response iteration from the bottom or top of a lattice
* ``markov``: finite-state open-loop games with Kolmogorov forward dynamics
* ``stopping``: optimal-stopping games with common noise on scenario trees
* ``oracle``: brute-force verifiers
* ``cli``: configuration-driven runner
"""

from .engine import GameInterface, IterateChain, learn
from .errors import ConfigError, MFGError, ResourceError, ShapeError, StructuralAssumptionViolation
from .stochorder import MeasureFlow, SurvivalMeasure, join_st, leq_st, meet_st

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "GameInterface",
    "IterateChain",
    "MFGError",
    "MeasureFlow",
    "ResourceError",
    "ShapeError",
    "StructuralAssumptionViolation",
    "SurvivalMeasure",
    "join_st",
    "learn",
    "leq_st",
    "meet_st",
]
