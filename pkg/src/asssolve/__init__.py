"""Alternating splitting solvers for time-periodic parabolic optimal control systems."""
from .asss import (
    AsssConfig,
    InnerSolveError,
    TimeLimitExceeded,
    alpha_star,
    asss_solve,
    gamma_bound,
    iasss_solve,
    iteration_matrix_dense,
    zeta,
)
from .blocksys import BOperator, ControlProblem, GOperator, ProblemParams, build_problem
from .fem import FemSystem, GridConfig, build_fem_system
from .precond import (
    AsssPreconditioner,
    BasPreconditioner,
    BdPreconditioner,
    PresbPreconditioner,
    fgmres_asss,
    fgmres_bas,
    fgmres_bd,
    fgmres_presb,
    ibas_solve,
)

__version__ = "0.1.0"
