"""Mixed finite-volume solver for generalized Forchheimer flow of slightly compressible fluids."""

from .assembly import LinearSolveConfig, SaddleSystem, assemble_system, solve_saddle
from .constitutive import (
    ForchheimerLaw,
    check_continuity_bound,
    check_monotonicity_bound,
    eval_F,
    eval_Fz,
    eval_K,
    flux_from_gradient,
    gradient_from_flux,
    lemma_constants,
    solve_s,
)
from .errors import (
    ConfigError,
    DomainError,
    LinearSolveError,
    PicardError,
    RootSolveError,
    TransientError,
)
from .grid import BoundaryTrace, CartesianGrid, CellField, FaceField, build_grid, norms
from .solvers import (
    SolverConfig,
    StationaryProblem,
    TransientProblem,
    picard_solve,
    primal_residual,
    run_transient,
    solve_stationary,
    step_transient,
)

__all__ = [
    "BoundaryTrace", "CartesianGrid", "CellField", "ConfigError", "DomainError", "FaceField",
    "ForchheimerLaw", "LinearSolveConfig", "LinearSolveError", "PicardError", "RootSolveError",
    "SaddleSystem", "SolverConfig", "StationaryProblem", "TransientError", "TransientProblem",
    "assemble_system", "build_grid", "check_continuity_bound", "check_monotonicity_bound",
    "eval_F", "eval_Fz", "eval_K", "flux_from_gradient", "gradient_from_flux",
    "lemma_constants", "norms", "picard_solve", "primal_residual", "run_transient",
    "solve_saddle", "solve_s", "solve_stationary", "step_transient",
]
