"""Python access to the roadrl simulator, planner, reward and trainer."""

from ._core import (
    ACTION_COUNT,
    Env,
    MapError,
    action_index,
    compute_reward,
    learning_curve,
    plan_route,
    train,
)

__all__ = [
    "ACTION_COUNT",
    "Env",
    "MapError",
    "action_index",
    "compute_reward",
    "learning_curve",
    "plan_route",
    "train",
]
