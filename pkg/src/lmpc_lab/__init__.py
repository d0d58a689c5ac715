"""Learning model predictive control for iterative tasks."""
from .core import (ConfigurationError, ConstraintSet, DynamicsModel, Ellipse, IterationRecord,
                   MinimumTimeCost, QuadraticCost, Trajectory, check_feasible, check_transition,
                   iteration_cost, make_record, simulate, step)
from .lmpc import (CampaignResult, LmpcProblem, NoFeasibleCandidateError, PlanPreference, StepResult,
                   run_iteration, run_until_convergence, solve_lmpc_step, solve_relaxed_step)
from .qp_solver import ActiveSetSolver, CondensedHorizon, QpSolution, QpStatus, QuadraticProgram, solve_qp
from .safe_set import NonConvergentTrajectoryError, SampledSafeSet, cost_to_go_tails
from .systems import (AdaptiveDubinsInstance, ClqrInstance, DubinsInstance, appendix_initialize,
                      clqr_seed_iteration0, dubins_seed_iteration0)

__all__ = [
    "ActiveSetSolver", "AdaptiveDubinsInstance", "CampaignResult", "ClqrInstance", "CondensedHorizon",
    "ConfigurationError", "ConstraintSet", "DubinsInstance", "DynamicsModel", "Ellipse", "IterationRecord",
    "LmpcProblem", "MinimumTimeCost", "NoFeasibleCandidateError", "NonConvergentTrajectoryError",
    "PlanPreference", "QpSolution", "QpStatus", "QuadraticCost", "QuadraticProgram", "SampledSafeSet",
    "StepResult", "Trajectory", "appendix_initialize", "check_feasible", "check_transition",
    "clqr_seed_iteration0", "cost_to_go_tails", "dubins_seed_iteration0", "iteration_cost", "make_record",
    "run_iteration", "run_until_convergence", "simulate", "solve_lmpc_step", "solve_qp",
    "solve_relaxed_step", "step",
]
