"""Multi-task episodic RL: layered MDPs, eps-dissimilar instances, and an
optimistic learner that pools data across similar tasks."""

from .bonuses import BonusConfig
from .instances import HardInstanceParams, RandomInstanceConfig, gen_gap_dependent_hard, gen_gap_independent_hard, gen_random
from .learner import LearnerConfig, RegretLog, run
from .mdp import LayeredMDP, Policy, evaluate_policy, expected_return, gaps, optimal_values, sample_episode, validate
from .multitask import MultiTaskInstance, measure_dissimilarity, subpar_set

__version__ = "0.1.0"

__all__ = [
    "BonusConfig",
    "HardInstanceParams",
    "LayeredMDP",
    "LearnerConfig",
    "MultiTaskInstance",
    "Policy",
    "RandomInstanceConfig",
    "RegretLog",
    "evaluate_policy",
    "expected_return",
    "gaps",
    "gen_gap_dependent_hard",
    "gen_gap_independent_hard",
    "gen_random",
    "measure_dissimilarity",
    "optimal_values",
    "run",
    "sample_episode",
    "subpar_set",
    "validate",
]
