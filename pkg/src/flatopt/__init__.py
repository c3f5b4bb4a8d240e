"""Closed-loop motion planning for differentially flat systems driven
toward the minimizers of time-varying convex programs.

The feedback law places the output's highest derivative so that the
objective gradient (or KKT residual, or barrier gradient) obeys a
designed exponentially stable linear system, making the tracking error
to the moving optimum decay at a certifiable rate.
"""

from ._backend import BACKEND
from .cli import (
    csv_header,
    load_config,
    materialize_config,
    parse_config,
    read_trajectory_csv,
    run_cli,
    serialize_config,
    write_trajectory_csv,
)
from .errors import (
    BarrierDomain,
    ConfigError,
    FlatnessSingularity,
    FlatoptError,
    InCollision,
    InfeasibleStart,
    InsufficientSamples,
    NoConvergence,
    NotHurwitz,
    RankDeficient,
    RhsDomainError,
    SingularMatrix,
    StepUnderflow,
    UnknownScenario,
    UnsupportedOrder,
    ValidationFailed,
)
from .flat_systems import (
    FlatModel,
    initial_jet_from_state,
    input_from_jet,
    integrator_model,
    output_from_state,
    plant_rhs,
    state_from_jet,
    wmr_model,
)
from .numerics import IntegratorConfig, finite_difference, integrate_ode, solve_linear
from .opt_dynamics import (
    BarrierSchedule,
    MultiplierDiagnostics,
    OutputJet,
    PrimalDualJet,
    barrier_objective,
    g_eq,
    g_ineq,
    g_unc,
    kkt_matrix,
    multiplier_diagnostics,
    slack_initial,
)
from .problem import (
    TvEqualityConstraints,
    TvInequalityConstraints,
    TvObjective,
    eval_objective_jet,
    gradient_flow_split,
    quadratic_tracking,
    validate_problem,
)
from .scenarios import (
    DiskObstacle,
    LocalWorkspaceHalfspace,
    PolynomialTrajectory,
    affine_halfspace_constraint,
    build_scenario,
    eval_polynomial_target,
    fit_cubic,
    formation_objective,
    local_workspace_halfspaces,
    separation_constraint,
    tracking_objective,
)
from .simulator import (
    DecayFit,
    OptimumResult,
    RunConfig,
    Scenario,
    TrajectoryLog,
    fit_decay_rate,
    run_closed_loop,
    solve_optimum_oracle,
)
from .target_dynamics import EPS_H, TargetSystemSpec, companion_matrix, decay_rate

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "EPS_H",
    "__version__",
    "BarrierDomain",
    "BarrierSchedule",
    "ConfigError",
    "DecayFit",
    "DiskObstacle",
    "FlatModel",
    "FlatnessSingularity",
    "FlatoptError",
    "InCollision",
    "InfeasibleStart",
    "InsufficientSamples",
    "IntegratorConfig",
    "LocalWorkspaceHalfspace",
    "MultiplierDiagnostics",
    "NoConvergence",
    "NotHurwitz",
    "OptimumResult",
    "OutputJet",
    "PolynomialTrajectory",
    "PrimalDualJet",
    "RankDeficient",
    "RhsDomainError",
    "RunConfig",
    "Scenario",
    "SingularMatrix",
    "StepUnderflow",
    "TargetSystemSpec",
    "TrajectoryLog",
    "TvEqualityConstraints",
    "TvInequalityConstraints",
    "TvObjective",
    "UnknownScenario",
    "UnsupportedOrder",
    "ValidationFailed",
    "affine_halfspace_constraint",
    "barrier_objective",
    "build_scenario",
    "companion_matrix",
    "csv_header",
    "decay_rate",
    "eval_objective_jet",
    "eval_polynomial_target",
    "finite_difference",
    "fit_cubic",
    "fit_decay_rate",
    "formation_objective",
    "g_eq",
    "g_ineq",
    "g_unc",
    "gradient_flow_split",
    "initial_jet_from_state",
    "input_from_jet",
    "integrate_ode",
    "integrator_model",
    "kkt_matrix",
    "load_config",
    "local_workspace_halfspaces",
    "materialize_config",
    "multiplier_diagnostics",
    "output_from_state",
    "parse_config",
    "plant_rhs",
    "quadratic_tracking",
    "read_trajectory_csv",
    "run_cli",
    "run_closed_loop",
    "separation_constraint",
    "serialize_config",
    "slack_initial",
    "solve_linear",
    "solve_optimum_oracle",
    "state_from_jet",
    "tracking_objective",
    "validate_problem",
    "write_trajectory_csv",
]
