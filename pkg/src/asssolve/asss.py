"""ASSS stationary iteration for ``B x = (Mbar + G Kbar) x = b``.

One sweep is

    (alpha I + Mbar) x_half = (alpha I - G Kbar) x + b
    (alpha I + Kbar) x_new  = (alpha I + G Mbar) x_half - G b

Both shifted matrices are block diagonal with four copies of an m x m SPD
matrix, so every solve is a single factor applied to an (m, 4) block.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .blocksys import BOperator, ControlProblem, GOperator, ProblemParams, apply_B, apply_G, apply_G1
from .fem import FemSystem
from .sparsela import (
    CsrMatrix,
    KrylovConfig,
    SolveReport,
    cg,
    cholesky_factor,
    dense_eig_general,
    global_cg,
    ichol_with_fallback,
    inverse_power_iteration,
    power_iteration,
)

OUTER = KrylovConfig(tol_relative=1e-6, max_iterations=500)
INNER = KrylovConfig(tol_relative=1e-4, max_iterations=500)
DROPTOL = 1e-3
DENSE_K_MAX = 4


class InnerSolveError(RuntimeError):
    pass


class TimeLimitExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class AsssConfig:
    alpha: float
    outer: KrylovConfig = OUTER
    inner: KrylovConfig = INNER
    mode: str = "exact"
    droptol: float = DROPTOL

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.mode not in ("exact", "inexact"):
            raise ValueError(f"mode must be 'exact' or 'inexact', got {self.mode!r}")


# ---------------------------------------------------------------------------
# parameter and bounds


def alpha_star(M: CsrMatrix, q1_mass: bool = False) -> float:
    """sqrt(mu_min * mu_max) for the mass matrix.

    With ``q1_mass`` the closed form (3/4)*diag(M) is used (valid for Q1
    elements on a uniform mesh, where sigma(D^{-1}M) is bounded by [1/4, 9/4]).
    Otherwise both extremes are estimated by power / inverse-power iteration.
    """
    if q1_mass:
        d = M.diagonal()
        if not np.allclose(d, d[0], rtol=1e-12, atol=0):
            raise ValueError("Q1 closed form needs a constant mass-matrix diagonal")
        return 0.75 * float(d[0])
    return alpha_star_estimate(M)[0]


def alpha_star_estimate(M: CsrMatrix, lower_bound: float = 0.0):
    """(alpha*, mu_min estimate, mu_max estimate) from power and inverse-power iteration.

    ``lower_bound``, when known to lie strictly below sigma(M), is used as the
    inverse-iteration shift; the start vector is then the constant vector.
    """
    hi = power_iteration(M)
    if lower_bound > 0.0:
        lo = inverse_power_iteration(M, shift=lower_bound, x0=np.ones(M.nrows))
    else:
        lo = inverse_power_iteration(M)
    return float(np.sqrt(lo.value * hi.value)), lo, hi


def _f(alpha: float, mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.float64)
    return np.hypot(alpha, mu) / (alpha + mu)


def zeta(alpha: float, mu_min: float, mu_max: float) -> float:
    """max over sigma(M) of sqrt(alpha^2 + mu^2) / (alpha + mu), from the endpoints."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not 0 < mu_min <= mu_max:
        raise ValueError("need 0 < mu_min <= mu_max")
    return float(np.max(_f(alpha, [mu_min, mu_max])))


def gamma_bound(alpha: float, spec_M, spec_K_scaled) -> float:
    """zeta(alpha) times the same factor over the eta-scaled stiffness spectrum.

    ``spec_K_scaled`` is (eta*lambda_min, eta*lambda_max); lambda_min = 0 is
    allowed (semidefinite K) and makes the second factor 1.
    """
    lo, hi = spec_K_scaled
    if not 0 <= lo <= hi:
        raise ValueError("need 0 <= eta*lambda_min <= eta*lambda_max")
    return zeta(alpha, *spec_M) * float(np.max(_f(alpha, [lo, hi])))


# ---------------------------------------------------------------------------
# inner solvers


class SpdBlockSolver:
    """Solves (shift I + scale A) X = R for (m, k) blocks.

    ``mode="exact"`` uses one banded Cholesky factor.  Otherwise the block is
    solved by incomplete-Cholesky preconditioned global CG, or column by
    column with plain CG when ``columnwise`` is set.  ``iterations`` counts
    inner Krylov steps across all calls.
    """

    def __init__(self, A: CsrMatrix, shift: float, scale: float, mode: str = "inexact",
                 inner: KrylovConfig = INNER, droptol: float = DROPTOL, columnwise: bool = False):
        if mode not in ("exact", "inexact"):
            raise ValueError(f"mode must be 'exact' or 'inexact', got {mode!r}")
        self.matrix = A.add(CsrMatrix.identity(A.nrows), scale, shift) if shift else A.scaled(scale)
        self.mode = mode
        self.inner = inner
        self.columnwise = columnwise
        self.iterations = 0
        if mode == "exact":
            self._factor = cholesky_factor(self.matrix)
        else:
            self._factor = ichol_with_fallback(self.matrix, droptol)

    def __call__(self, R: np.ndarray) -> np.ndarray:
        if self.mode == "exact":
            return self._factor.solve(R)
        if R.ndim == 1:
            x, rep = cg(self.matrix, R, pre=self._factor, cfg=self.inner)
            self.iterations += rep.iterations
            return x
        if self.columnwise:
            out = np.empty_like(R)
            for j in range(R.shape[1]):
                out[:, j], rep = cg(self.matrix, R[:, j], pre=self._factor, cfg=self.inner)
                self.iterations += rep.iterations
            return out
        X, rep = global_cg(self.matrix, R, pre=self._factor, cfg=self.inner)
        self.iterations += rep.iterations
        return X

    solve = __call__


def solve_blocks(solver: SpdBlockSolver, v: np.ndarray) -> np.ndarray:
    """Apply ``solver`` to the four m-blocks of a 4m (or 2m) vector as one (m, nblocks) block."""
    m = solver.matrix.nrows
    V = v.reshape(-1, m)
    W = solver(np.ascontiguousarray(V.T))
    return np.ascontiguousarray(W.T).reshape(v.shape)


@dataclass
class AsssSolvers:
    """Shared (alpha I + M) and (alpha I + eta K) solvers for one (problem, alpha)."""

    op: BOperator
    cfg: AsssConfig
    m_solver: SpdBlockSolver = field(init=False)
    k_solver: SpdBlockSolver = field(init=False)

    def __post_init__(self):
        c = self.cfg
        self.m_solver = SpdBlockSolver(self.op.M, c.alpha, 1.0, c.mode, c.inner, c.droptol)
        self.k_solver = SpdBlockSolver(self.op.K, c.alpha, self.op.params.eta, c.mode, c.inner, c.droptol)

    @property
    def inner_iterations(self) -> int:
        return self.m_solver.iterations + self.k_solver.iterations

    def solve_M(self, v):
        return solve_blocks(self.m_solver, v)

    def solve_K(self, v):
        return solve_blocks(self.k_solver, v)


# ---------------------------------------------------------------------------
# drivers


def _relres(op: BOperator, r: np.ndarray, bhat_norm: float) -> float:
    return float(np.linalg.norm(apply_G1(op.params, r))) / bhat_norm


def asss_sweep(op: BOperator, b: np.ndarray, x: np.ndarray, solvers: AsssSolvers) -> np.ndarray:
    """One full ASSS iteration (both half-steps)."""
    alpha = solvers.cfg.alpha
    G = op.G
    x_half = solvers.solve_M(alpha * x - apply_G(G, op.apply_Kbar(x)) + b)
    return solvers.solve_K(alpha * x_half + apply_G(G, op.apply_Mbar(x_half)) - apply_G(G, b))


def asss_solve(op: BOperator, b: np.ndarray, cfg: AsssConfig, x0=None, deadline: float | None = None,
               solvers: AsssSolvers | None = None):
    """Stationary ASSS from a zero initial guess, stopped on the main-system residual."""
    t0 = time.perf_counter()
    solvers = solvers or AsssSolvers(op, cfg)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    bhat_norm = float(np.linalg.norm(apply_G1(op.params, b)))
    rep = SolveReport()
    rep.relative_residual_history.append(_relres(op, b - apply_B(op, x), bhat_norm))
    while rep.relative_residual_history[-1] > cfg.outer.tol_relative and rep.iterations < cfg.outer.max_iterations:
        if deadline is not None and time.perf_counter() > deadline:
            raise TimeLimitExceeded(f"ASSS passed its time limit after {rep.iterations} iterations")
        x = asss_sweep(op, b, x, solvers)
        rep.iterations += 1
        rep.relative_residual_history.append(_relres(op, b - apply_B(op, x), bhat_norm))
    rep.converged = rep.relative_residual_history[-1] <= cfg.outer.tol_relative
    rep.status = "converged" if rep.converged else "max_iterations"
    rep.inner_iteration_totals = solvers.inner_iterations
    rep.wall_time = time.perf_counter() - t0
    return x, rep


def iasss_solve(op: BOperator, b: np.ndarray, cfg: AsssConfig, x0=None, deadline: float | None = None,
                callback=None):
    """Inexact ASSS in residual-correction form.

    Each outer step solves (alpha I + M) delta = r and
    (alpha I + eta K) delta = -G r_half with global CG on (m, 4) blocks,
    preconditioned by incomplete Cholesky (``cfg.mode`` selects exact
    Cholesky solves instead).
    """
    t0 = time.perf_counter()
    solvers = AsssSolvers(op, cfg)
    G = op.G
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    bhat_norm = float(np.linalg.norm(apply_G1(op.params, b)))
    rep = SolveReport()
    k = 0
    while True:
        r = b - apply_B(op, x)
        rel = _relres(op, r, bhat_norm)
        rep.relative_residual_history.append(rel)
        if rel <= cfg.outer.tol_relative or k >= cfg.outer.max_iterations:
            break
        if deadline is not None and time.perf_counter() > deadline:
            raise TimeLimitExceeded(f"IASSS passed its time limit after {k} iterations")
        try:
            x_half = x + solvers.solve_M(r)
        except Exception as exc:
            raise InnerSolveError(f"IASSS outer iteration {k}: first half-step solve failed: {exc}") from exc
        r_half = b - apply_B(op, x_half)
        try:
            x = x_half + solvers.solve_K(-apply_G(G, r_half))
        except Exception as exc:
            raise InnerSolveError(f"IASSS outer iteration {k}: second half-step solve failed: {exc}") from exc
        k += 1
        if callback is not None:
            callback(x)
    rep.iterations = k
    rep.converged = rep.relative_residual_history[-1] <= cfg.outer.tol_relative
    rep.status = "converged" if rep.converged else "max_iterations"
    rep.inner_iteration_totals = solvers.inner_iterations
    rep.wall_time = time.perf_counter() - t0
    return x, rep


def solve_problem(problem: ControlProblem, cfg: AsssConfig, **kw):
    """Run exact ASSS or IASSS (per ``cfg.mode``) on a ControlProblem."""
    if cfg.mode == "exact":
        return asss_solve(problem.op, problem.b, cfg, **kw)
    return iasss_solve(problem.op, problem.b, cfg, **kw)


def geometric_rate(history, window: int = 10) -> float:
    """Per-iteration contraction from a least-squares fit of log residuals over the last ``window`` steps."""
    h = np.asarray(history, dtype=np.float64)
    h = h[h > 0]
    if h.size < 3:
        raise ValueError("history too short for a rate fit")
    tail = np.log(h[-min(window, h.size):])
    slope = np.polyfit(np.arange(tail.size), tail, 1)[0]
    return float(np.exp(slope))


# ---------------------------------------------------------------------------
# dense verification at small k


def _dense_parts(fem: FemSystem, params: ProblemParams, alpha: float):
    if fem.grid.k > DENSE_K_MAX:
        raise ValueError(f"dense iteration matrix limited to k <= {DENSE_K_MAX} (got k={fem.grid.k})")
    m = fem.m
    I4 = np.eye(4 * m)
    Mb = np.kron(np.eye(4), fem.M.to_dense())
    Kb = params.eta * np.kron(np.eye(4), fem.K.to_dense())
    G = GOperator.from_params(params).dense(m)
    return I4, Mb, Kb, G


def iteration_matrix_dense(fem: FemSystem, params: ProblemParams, alpha: float) -> np.ndarray:
    """T = (aI+K)^{-1} (aI+GM) (aI+M)^{-1} (aI-GK), dense, k <= 4."""
    I, Mb, Kb, G = _dense_parts(fem, params, alpha)
    inner = np.linalg.solve(alpha * I + Mb, alpha * I - G @ Kb)
    return np.linalg.solve(alpha * I + Kb, (alpha * I + G @ Mb) @ inner)


def similar_iteration_matrix_dense(fem: FemSystem, params: ProblemParams, alpha: float) -> np.ndarray:
    """R S with R = (aI+GM)(aI+M)^{-1}, S = (aI-GK)(aI+K)^{-1}; similar to T."""
    I, Mb, Kb, G = _dense_parts(fem, params, alpha)
    R = np.linalg.solve((alpha * I + Mb).T, (alpha * I + G @ Mb).T).T
    S = np.linalg.solve((alpha * I + Kb).T, (alpha * I - G @ Kb).T).T
    return R @ S


def spectral_radius_T(fem: FemSystem, params: ProblemParams, alpha: float) -> float:
    return float(np.max(np.abs(dense_eig_general(iteration_matrix_dense(fem, params, alpha)))))
