"""safeq: convex safe-set value interpolation for constrained linear systems.

The library stores feasible trajectories of a linear system, interpolates
their costs-to-go over the convex hull of the stored states by solving small
linear programs, and turns the interpolation multipliers into a feedback
policy with runtime-verified safety and performance monitors.
"""

from safeq.lp import (
    FEAS_TOL,
    LpNumericError,
    LpProblem,
    LpSolution,
    LpStatus,
    lp_feasible,
    simplex_solve,
)
from safeq.model import (
    HullDistanceCost,
    IndicatorCost,
    LtiSystem,
    QuadCost,
    TerminalSet,
)
from safeq.clqr import (
    ClqrConfig,
    ClqrSolution,
    NoConvergence,
    QpStalled,
    StateConstraintActive,
    dare_solution,
    riccati_lqr,
    solve_clqr,
    solve_clqr_full,
)
from safeq.store import (
    DatasetFormatError,
    SafeSetStore,
    Trajectory,
    ValidationError,
    build_safe_set,
    compute_cost_to_go,
    load_dataset,
    save_dataset,
    validate_trajectory,
)
from safeq.qfunc import (
    LocalSelection,
    QueryResult,
    contains,
    eval_q_global,
    eval_q_local,
    knn_select,
)
from safeq.policy import (
    PolicyConfig,
    PolicyInfeasible,
    PolicyStep,
    SimulationReport,
    StepRecord,
    load_report,
    policy_eval,
    report_to_trajectory,
    run_closed_loop,
    save_report,
    step,
    verify_candidate_shift,
)

__version__ = "0.1.0"

__all__ = [
    "FEAS_TOL",
    "LpNumericError",
    "LpProblem",
    "LpSolution",
    "LpStatus",
    "lp_feasible",
    "simplex_solve",
    "HullDistanceCost",
    "IndicatorCost",
    "LtiSystem",
    "QuadCost",
    "TerminalSet",
    "ClqrConfig",
    "ClqrSolution",
    "NoConvergence",
    "QpStalled",
    "StateConstraintActive",
    "dare_solution",
    "riccati_lqr",
    "solve_clqr",
    "solve_clqr_full",
    "DatasetFormatError",
    "SafeSetStore",
    "Trajectory",
    "ValidationError",
    "build_safe_set",
    "compute_cost_to_go",
    "load_dataset",
    "save_dataset",
    "validate_trajectory",
    "LocalSelection",
    "QueryResult",
    "contains",
    "eval_q_global",
    "eval_q_local",
    "knn_select",
    "PolicyConfig",
    "PolicyInfeasible",
    "PolicyStep",
    "SimulationReport",
    "StepRecord",
    "load_report",
    "policy_eval",
    "report_to_trajectory",
    "run_closed_loop",
    "save_report",
    "step",
    "verify_candidate_shift",
]
