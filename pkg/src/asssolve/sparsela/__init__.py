"""Sparse and small dense linear algebra used by the solvers."""
from .cholesky import (
    CholeskyFactor,
    IncompleteCholeskyFactor,
    NotSPDError,
    cholesky_factor,
    cholesky_solve,
    ichol,
    ichol_with_fallback,
)
from .csr import CsrMatrix, DimensionError, spmv, symmetry_audit
from .eigen import (
    EigenConvergenceError,
    EigenEstimate,
    dense_eig_general,
    dense_eig_symmetric,
    hessenberg,
    inverse_power_iteration,
    power_iteration,
    spectral_radius,
)
from .krylov import (
    IndefiniteOperatorError,
    KrylovConfig,
    MultiVector,
    SolveReport,
    as_operator,
    as_preconditioner,
    cg,
    fgmres,
    global_cg,
    gmres,
)
from .mmio import read_matrix_market, read_spectrum_csv, write_matrix_market, write_spectrum_csv
