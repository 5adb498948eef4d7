"""Scenario-batched min-plus dynamic programming.

Two second-stage operators share one forward-sweep engine: the giant-tour
split for routing under stochastic demand and the order-up-to inventory DP.
"""

__version__ = "0.1.0"

from ._accel import USE_NUMBA, backend_name
from .dsirp import (
    CustomerSpec,
    DeliveryCostModel,
    HoldingPenaltyModel,
    ScheduleResult,
    batched_expected_cost,
    brute_force_schedule,
    build_transition_matrix,
    simulate_day,
    simulate_schedule,
    solve_customer_scenario,
)
from .engine import (
    BackendConfig,
    BatchResultSet,
    ProblemDims,
    adjust_batch_size,
    memory_footprint,
    run_batched,
)
from .minplus import (
    INF,
    MaskedTransition,
    ValueFrontier,
    extended_add,
    forward_sweep,
    minplus_apply,
    minplus_apply_options,
)
from .split import (
    GiantTour,
    RoutingInstance,
    SplitSolution,
    batched_expected_split,
    brute_force_split,
    build_split_inputs,
    split_scenario_linear,
    split_scenario_quadratic,
)

__all__ = [
    "USE_NUMBA", "backend_name",
    "CustomerSpec", "DeliveryCostModel", "HoldingPenaltyModel", "ScheduleResult",
    "batched_expected_cost", "brute_force_schedule", "build_transition_matrix",
    "simulate_day", "simulate_schedule", "solve_customer_scenario",
    "BackendConfig", "BatchResultSet", "ProblemDims", "adjust_batch_size",
    "memory_footprint", "run_batched",
    "INF", "MaskedTransition", "ValueFrontier", "extended_add", "forward_sweep",
    "minplus_apply", "minplus_apply_options",
    "GiantTour", "RoutingInstance", "SplitSolution", "batched_expected_split",
    "brute_force_split", "build_split_inputs", "split_scenario_linear",
    "split_scenario_quadratic",
]
