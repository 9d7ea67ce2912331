"""Preconditioners for FGMRES and the IBAS comparison iteration.

Every preconditioner here is an object with a ``solve(r)`` method and an
``inner_iterations`` counter, which is what :func:`fgmres` expects.

Complex 2m-vectors (y, q) of the original two-by-two complex system are
carried in the same (Re y, Im y, Re q, Im q) layout as the real 4m unknowns,
so the real 4x4 block matrix ``A`` is exactly the complex system.
"""
from __future__ import annotations

import time

import numpy as np
import scipy.sparse.linalg as spla

from .asss import (
    DROPTOL,
    INNER,
    AsssConfig,
    AsssSolvers,
    InnerSolveError,
    SpdBlockSolver,
    TimeLimitExceeded,
    _dense_parts,
    solve_blocks,
)
from .blocksys import BOperator, ControlProblem, PresbForms, ProblemParams, apply_G, blocks
from .fem import FemSystem
from .sparsela import CsrMatrix, KrylovConfig, SolveReport, fgmres

# FGMRES without restarts up to the iteration cap, as in a plain FGMRES run
OUTER_FGMRES = KrylovConfig(tol_relative=1e-6, max_iterations=500, restart=500)


class Deadline:
    """Wraps a preconditioner and raises TimeLimitExceeded once ``deadline`` (perf_counter) has passed."""

    def __init__(self, pre, deadline: float | None):
        self.pre = pre
        self.deadline = deadline

    @property
    def inner_iterations(self) -> int:
        return self.pre.inner_iterations

    def solve(self, r):
        if self.deadline is not None and time.perf_counter() > self.deadline:
            raise TimeLimitExceeded("preconditioned solve passed its time limit")
        return self.pre.solve(r)


def _fgmres(a, b, pre, cfg, deadline):
    return fgmres(a, b, pre=Deadline(pre, deadline), cfg=cfg)


# ---------------------------------------------------------------------------
# ASSS preconditioner


class AsssPreconditioner:
    """Inverse of P = (1/alpha)(I+G)^{-1}(alpha I + Mbar) G (alpha I + Kbar)."""

    def __init__(self, op: BOperator, alpha: float, mode: str = "inexact", inner: KrylovConfig = INNER,
                 droptol: float = DROPTOL):
        self.op = op
        self.alpha = alpha
        self.mode = mode
        self.solvers = AsssSolvers(op, AsssConfig(alpha, inner=inner, mode=mode, droptol=droptol))

    @property
    def inner_iterations(self) -> int:
        return self.solvers.inner_iterations

    def solve(self, r: np.ndarray) -> np.ndarray:
        return apply_asss_precond(self, r)

    __call__ = solve


def apply_asss_precond(p: AsssPreconditioner, r: np.ndarray) -> np.ndarray:
    G = p.op.G
    v = -p.alpha * (r + apply_G(G, r))
    w = p.solvers.solve_M(v)
    return p.solvers.solve_K(apply_G(G, w))


def fgmres_asss(op: BOperator, b: np.ndarray, p: AsssPreconditioner, cfg: KrylovConfig = OUTER_FGMRES,
                deadline: float | None = None):
    """Right-preconditioned FGMRES on B x = b."""
    return _fgmres(op, b, p, cfg, deadline)


def preconditioner_dense(fem: FemSystem, params: ProblemParams, alpha: float) -> np.ndarray:
    I, Mb, Kb, G = _dense_parts(fem, params, alpha)
    return np.linalg.solve(I + G, (alpha * I + Mb) @ G @ (alpha * I + Kb)) / alpha


def q_alpha_dense(fem: FemSystem, params: ProblemParams, alpha: float) -> np.ndarray:
    """Q = (1/alpha)(I+G)^{-1}(alpha G - Mbar)(alpha I - G Kbar), so that B = P - Q."""
    I, Mb, Kb, G = _dense_parts(fem, params, alpha)
    return np.linalg.solve(I + G, (alpha * G - Mb) @ (alpha * I - G @ Kb)) / alpha


# ---------------------------------------------------------------------------
# BAS: the block alternating splitting iteration and its preconditioner


def bas_iteration_alpha(params: ProblemParams) -> float:
    return params.d


def bas_preconditioner_alpha(params: ProblemParams) -> float:
    return params.d / (1.0 + params.sqrt_nu * params.omega)


def _complex_pair(x: np.ndarray):
    X = blocks(x)
    return X[0] + 1j * X[1], X[2] + 1j * X[3]


def _real4(y: np.ndarray, q: np.ndarray) -> np.ndarray:
    return np.concatenate([y.real, y.imag, q.real, q.imag])


def bas_first_projection(params: ProblemParams, r: np.ndarray) -> np.ndarray:
    """(1/d) [[I, -i w], [i w, -I]] r with w = omega sqrt(nu).

    Chosen so that this times A equals H1 + S1 of the splitting.
    """
    w = params.omega * params.sqrt_nu
    r1, r2 = _complex_pair(r)
    return _real4(r1 - 1j * w * r2, 1j * w * r1 - r2) / params.d


def bas_second_projection(r: np.ndarray) -> np.ndarray:
    """[[0, I], [I, 0]] r, the swap that turns A into H2 + S2."""
    X = blocks(r)
    return np.concatenate([X[2], X[3], X[0], X[1]])


def apply_p_alpha_inverse(params: ProblemParams, alpha: float, r: np.ndarray) -> np.ndarray:
    """Inverse of P(alpha) = N / (alpha (2 + nu w^2)) with N = [[1, conj(beta)], [beta, -1]].

    N^2 = (1 + |beta|^2) I and 1 + |beta|^2 = d (2 + nu w^2), so the inverse is alpha N / d.
    """
    beta = params.d + 1j * params.omega * params.sqrt_nu
    r1, r2 = _complex_pair(r)
    return alpha * _real4(r1 + np.conj(beta) * r2, beta * r1 - r2) / params.d


def p_alpha_apply(params: ProblemParams, alpha: float, x: np.ndarray) -> np.ndarray:
    beta = params.d + 1j * params.omega * params.sqrt_nu
    x1, x2 = _complex_pair(x)
    return _real4(x1 + np.conj(beta) * x2, beta * x1 - x2) / (alpha * (2.0 + params.nu * params.omega**2))


class BasPreconditioner:
    """Inverse of P_BAS = (1+alpha) P(alpha) blockdiag(alpha M + sqrt(nu) K)."""

    def __init__(self, fem: FemSystem, params: ProblemParams, alpha: float | None = None, mode: str = "inexact",
                 inner: KrylovConfig = INNER, droptol: float = DROPTOL):
        self.params = params
        self.alpha = bas_preconditioner_alpha(params) if alpha is None else alpha
        self.solver = SpdBlockSolver(fem.K.add(fem.M, params.sqrt_nu, self.alpha), 0.0, 1.0, mode, inner, droptol)

    @property
    def inner_iterations(self) -> int:
        return self.solver.iterations

    def solve(self, r: np.ndarray) -> np.ndarray:
        return apply_bas_precond(self, r)

    __call__ = solve


def apply_bas_precond(p: BasPreconditioner, r: np.ndarray) -> np.ndarray:
    z = apply_p_alpha_inverse(p.params, p.alpha, r) / (1.0 + p.alpha)
    return solve_blocks(p.solver, z)


def fgmres_bas(problem: ControlProblem, p: BasPreconditioner, cfg: KrylovConfig = OUTER_FGMRES,
               deadline: float | None = None):
    """FGMRES on the real 4x4 block system A x = bhat."""
    return _fgmres(problem.A, problem.bhat, p, cfg, deadline)


def ibas_solve(problem: ControlProblem, alpha: float | None = None, outer: KrylovConfig = KrylovConfig(1e-6, 500),
               inner: KrylovConfig = INNER, mode: str = "inexact", droptol: float = DROPTOL,
               deadline: float | None = None):
    """Inexact BAS iteration with V = H1, in residual-correction form.

    Step 1 solves (1+alpha) M delta = P1 r, step 2 solves
    (alpha M + sqrt(nu) K) delta = P2 r_half; each on four real columns with
    global CG.  Returns the real 4m iterate (same layout as the complex pair).
    """
    t0 = time.perf_counter()
    params, fem = problem.params, problem.fem
    alpha = bas_iteration_alpha(params) if alpha is None else alpha
    m_solver = SpdBlockSolver(fem.M, 0.0, 1.0 + alpha, mode, inner, droptol)
    k_solver = SpdBlockSolver(fem.K.add(fem.M, params.sqrt_nu, alpha), 0.0, 1.0, mode, inner, droptol)
    A, bhat = problem.A, problem.bhat
    bnorm = float(np.linalg.norm(bhat))
    x = np.zeros_like(bhat)
    rep = SolveReport()
    k = 0
    while True:
        r = bhat - A.matvec(x)
        rel = float(np.linalg.norm(r)) / bnorm
        rep.relative_residual_history.append(rel)
        if rel <= outer.tol_relative or k >= outer.max_iterations or not np.isfinite(rel):
            break
        if deadline is not None and time.perf_counter() > deadline:
            raise TimeLimitExceeded(f"IBAS passed its time limit after {k} iterations")
        try:
            x_half = x + solve_blocks(m_solver, bas_first_projection(params, r))
            r_half = bhat - A.matvec(x_half)
            x = x_half + solve_blocks(k_solver, bas_second_projection(r_half))
        except Exception as exc:
            raise InnerSolveError(f"IBAS outer iteration {k}: inner solve failed: {exc}") from exc
        k += 1
    rep.iterations = k
    rep.converged = rel <= outer.tol_relative
    rep.status = "converged" if rep.converged else ("diverged" if not np.isfinite(rel) else "max_iterations")
    rep.inner_iteration_totals = m_solver.iterations + k_solver.iterations
    rep.wall_time = time.perf_counter() - t0
    return x, rep


def bas_iteration_matrix_dense(fem: FemSystem, params: ProblemParams, alpha: float) -> np.ndarray:
    """Complex 2m x 2m BAS iteration matrix (V = H1), for the convergence sanity check."""
    M, K = fem.M.to_dense(), fem.K.to_dense()
    m = M.shape[0]
    s, w = params.sqrt_nu, params.omega
    I = np.eye(m)
    A = np.block([[M, s * (K - 1j * w * M)], [s * (K + 1j * w * M), -M]])
    P1 = np.block([[I, -1j * w * s * I], [1j * w * s * I, -I]]) / params.d
    P2 = np.block([[0 * I, I], [I, 0 * I]])
    H1 = np.kron(np.eye(2), M)
    H2 = s * np.kron(np.eye(2), K)
    S1 = P1 @ A - H1
    S2 = P2 @ A - H2
    first = np.linalg.solve((alpha + 1) * H1, alpha * H1 - S1)
    return np.linalg.solve(alpha * H1 + H2, (alpha * H1 - S2) @ first)


# ---------------------------------------------------------------------------
# PRESB


class PresbPreconditioner:
    """Inverse of C = [[E + F + F^T, F^T], [F, -E]] by two (E + F)-type solves.

    In ``inexact`` mode the (E + F) and (E + F^T) systems are solved by
    FGMRES preconditioned with blockdiag(S, S), S = (1 + w sqrt(nu)) M +
    sqrt(nu) K, whose applications are IC-preconditioned CG.  ``exact`` mode
    uses sparse LU for both systems.
    """

    def __init__(self, forms: PresbForms, mode: str = "inexact", inner: KrylovConfig = INNER,
                 droptol: float = DROPTOL):
        self.forms = forms
        self.mode = mode
        self.inner = KrylovConfig(inner.tol_relative, inner.max_iterations, inner.max_iterations)
        self.gmres_iterations = 0
        self.m = forms.M.nrows
        if mode == "exact":
            self._lu_plus = spla.splu(forms.E_plus_F.to_scipy().tocsc())
            self._lu_plus_t = spla.splu(forms.E_plus_FT.to_scipy().tocsc())
            self.s_solver = None
        else:
            self.s_solver = SpdBlockSolver(forms.S, 0.0, 1.0, mode, inner, droptol, columnwise=True)

    @property
    def inner_iterations(self) -> int:
        s = self.s_solver.iterations if self.s_solver is not None else 0
        return self.gmres_iterations + s

    def _s_blocks(self, v):
        return solve_blocks(self.s_solver, v)

    def _solve_pair(self, mat: CsrMatrix, lu, rhs, which: str):
        if self.mode == "exact":
            return lu.solve(rhs)
        x, rep = fgmres(mat, rhs, pre=self._s_blocks, cfg=self.inner)
        self.gmres_iterations += rep.iterations
        if not rep.converged:
            raise InnerSolveError(f"PRESB inner {which} solve: {rep.status} after {rep.iterations} iterations "
                                  f"(relres {rep.final_relative_residual:.2e})")
        return x

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return apply_presb_precond(self, rhs)

    __call__ = solve


def apply_presb_precond(p: PresbPreconditioner, rhs: np.ndarray) -> np.ndarray:
    n2 = 2 * p.m
    f, g = rhs[:n2], rhs[n2:]
    E = p.forms.E
    u = p._solve_pair(p.forms.E_plus_FT, getattr(p, "_lu_plus_t", None), f - g, "(E + F^T)")
    r = p._solve_pair(p.forms.E_plus_F, getattr(p, "_lu_plus", None), g + E.matvec(u), "(E + F)")
    return np.concatenate([r, u - r])


def fgmres_presb(problem: ControlProblem, p: PresbPreconditioner, cfg: KrylovConfig = OUTER_FGMRES,
                 deadline: float | None = None):
    return _fgmres(problem.presb.calK, problem.bhat, p, cfg, deadline)


# ---------------------------------------------------------------------------
# block diagonal


BD_MASS_WEIGHTS = ("sqrt_nu_omega", "omega")


class BdPreconditioner:
    """blockdiag(T, T, T, T) with T = (1 + c) M + sqrt(nu) K, solved by IC-preconditioned CG.

    ``mass_weight`` picks c: ``"sqrt_nu_omega"`` (default) gives
    T = M + sqrt(nu)(K + w M); ``"omega"`` gives the variant T = (1 + w) M + sqrt(nu) K.
    """

    def __init__(self, fem: FemSystem, params: ProblemParams, mode: str = "inexact", inner: KrylovConfig = INNER,
                 droptol: float = DROPTOL, mass_weight: str = "sqrt_nu_omega"):
        if mass_weight not in BD_MASS_WEIGHTS:
            raise ValueError(f"mass_weight must be one of {BD_MASS_WEIGHTS}, got {mass_weight!r}")
        c = params.sqrt_nu * params.omega if mass_weight == "sqrt_nu_omega" else params.omega
        T = fem.M.add(fem.K, 1.0 + c, params.sqrt_nu)
        self.solver = SpdBlockSolver(T, 0.0, 1.0, mode, inner, droptol, columnwise=True)

    @property
    def matrix(self) -> CsrMatrix:
        return self.solver.matrix

    @property
    def inner_iterations(self) -> int:
        return self.solver.iterations

    def solve(self, r: np.ndarray) -> np.ndarray:
        return apply_bd_precond(self, r)

    __call__ = solve


def apply_bd_precond(p: BdPreconditioner, r: np.ndarray) -> np.ndarray:
    return solve_blocks(p.solver, r)


def fgmres_bd(problem: ControlProblem, p: BdPreconditioner, cfg: KrylovConfig = OUTER_FGMRES,
              deadline: float | None = None):
    return _fgmres(problem.A, problem.bhat, p, cfg, deadline)
