"""Quickest detection of rate changes in Poisson count streams.

Hidden Markov model with absorbing low/high-rate states, the belief-sum
stopping rule, a value-iteration solver for the optimal stopping policy, and
simulation / learning / ingestion tools around them.
"""

__version__ = "0.1.0"

from .detector import BeliefSumDetector, DetectorConfig, DetectorState, StatisticRecord
from .exceptions import (
    ConfigurationError,
    DegenerateObservationError,
    IngestError,
    InvalidParameterError,
)
from .hmm import (
    RateLadder,
    ReducedBelief,
    TransitionModel,
    belief_update,
    build_p1,
    build_p2,
    poisson_pmf,
    reduced_update,
    sigma,
)
from .learner import RateLearner, default_transition, learn_ladder, reference_ladder
from .simulator import ScenarioConfig, evaluate, sample_path
from .solver import CostModel, POMDPSolver, SimplexGrid, value_iterate

__all__ = [
    "BeliefSumDetector",
    "ConfigurationError",
    "CostModel",
    "DegenerateObservationError",
    "DetectorConfig",
    "DetectorState",
    "IngestError",
    "InvalidParameterError",
    "POMDPSolver",
    "RateLadder",
    "RateLearner",
    "ReducedBelief",
    "ScenarioConfig",
    "SimplexGrid",
    "StatisticRecord",
    "TransitionModel",
    "belief_update",
    "build_p1",
    "build_p2",
    "default_transition",
    "evaluate",
    "learn_ladder",
    "reference_ladder",
    "poisson_pmf",
    "reduced_update",
    "sample_path",
    "sigma",
    "value_iterate",
]
