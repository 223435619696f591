"""Cooperative multi-agent training on decomposed noisy rewards."""

from .buffer import DEFAULT_CAPACITY, TrajectoryBuffer, rollout
from .consistency import matrix_game_consistency, mixture_distorted_expectation
from .env import CoopSpreadEnv, MatrixGameEnv, coop_spread_env
from .learner import (
    QuantileLearner,
    distorted_action_values,
    local_reward_sample,
    make_learner,
    select_action,
    td_update,
)
from .training import (
    MODES,
    IterationMetrics,
    MarlConfig,
    TrainResult,
    evaluate,
    train,
)

__all__ = [
    "DEFAULT_CAPACITY",
    "TrajectoryBuffer",
    "rollout",
    "matrix_game_consistency",
    "mixture_distorted_expectation",
    "CoopSpreadEnv",
    "MatrixGameEnv",
    "coop_spread_env",
    "QuantileLearner",
    "distorted_action_values",
    "local_reward_sample",
    "make_learner",
    "select_action",
    "td_update",
    "MODES",
    "IterationMetrics",
    "MarlConfig",
    "TrainResult",
    "evaluate",
    "train",
]
