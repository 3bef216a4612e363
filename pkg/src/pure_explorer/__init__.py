"""pure_explorer: optimal and meta-trained strategies for active sequential hypothesis testing."""

from pure_explorer.core import FixedBudget, FixedConfidence, History, RandomSource, rollout
from pure_explorer.envs import PriorSpec, make_prior, sample_env
from pure_explorer.exact import dual_search, solve_fixed_budget, solve_fixed_confidence
from pure_explorer.harness import run_experiment
from pure_explorer.learner import train

__all__ = [
    "FixedBudget",
    "FixedConfidence",
    "History",
    "PriorSpec",
    "RandomSource",
    "dual_search",
    "make_prior",
    "rollout",
    "run_experiment",
    "sample_env",
    "solve_fixed_budget",
    "solve_fixed_confidence",
    "train",
]
