"""Periodic channel scheduling for networked LQG control loops."""

from .analysis import (
    DIVERGENT,
    Branch,
    LossReport,
    ScheduleEvaluator,
    average_loss_plant,
    average_loss_total,
    elapsed_times,
    finite_horizon_loss,
    steady_cov_sequence,
)
from .model import Instance, PlantSpec, Schedule, load_instance, load_schedule, random_instance, validate_instance, validate_schedule
from .riccati import SteadyState, steady_state
from .search import MctsConfig, exhaustive_search, mcts_search, sweep
from .simulate import SimConfig, run_closed_loop

__all__ = [
    "DIVERGENT", "Branch", "LossReport", "ScheduleEvaluator", "average_loss_plant", "average_loss_total",
    "elapsed_times", "finite_horizon_loss", "steady_cov_sequence", "Instance", "PlantSpec", "Schedule",
    "load_instance", "load_schedule", "random_instance", "validate_instance", "validate_schedule",
    "SteadyState", "steady_state", "MctsConfig", "exhaustive_search", "mcts_search", "sweep",
    "SimConfig", "run_closed_loop",
]
