"""Mobility-aware computation offloading for software-defined vehicles."""

from .decision import (
    PsoConfig,
    decide_single,
    feasible_servers,
    measure_solver,
    objective,
    random_problem,
    solve_brute_force,
    solve_greedy,
    solve_pso,
)
from .detection import OutcomePolicy, classify, trace_report
from .domain import (
    LOCAL,
    Assignment,
    AssignmentProblem,
    Criticality,
    DecisionRecord,
    OffloadRequest,
    Outcome,
    ServerDescriptor,
    ServerStatus,
    ServiceSpec,
    VehicleState,
)
from .geometry import PenaltyWeights, direction_cost, direction_penalty, distance_cost, stay_time
from .simulator import ScenarioConfig, execute, run_scenario, sample_predicted_rtt, vehicle_at

__version__ = "0.1.0"
