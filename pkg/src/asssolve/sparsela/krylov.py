"""Krylov solvers: CG, global CG for multiple right-hand sides, GMRES and FGMRES.

Operators may be a :class:`CsrMatrix`, a dense array, or any callable
``v -> A v``.  Preconditioners are ``None``, a callable ``r -> z``, or an
object with a ``solve`` method; an ``inner_iterations`` attribute on the
preconditioner, when present, is read to fill
``SolveReport.inner_iteration_totals``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .csr import CsrMatrix

Operator = Callable[[np.ndarray], np.ndarray]

# A MultiVector is an (n, k) float array; column j is the j-th right-hand side.
MultiVector = np.ndarray

REORTH_THRESHOLD = 1e-8


class IndefiniteOperatorError(ArithmeticError):
    """CG met a search direction with p^T A p <= 0."""


@dataclass(frozen=True)
class KrylovConfig:
    tol_relative: float = 1e-6
    max_iterations: int = 500
    restart: int = 30

    def __post_init__(self):
        if not 0.0 < self.tol_relative < 1.0:
            raise ValueError("tol_relative must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.restart < 1:
            raise ValueError("restart must be >= 1")


@dataclass
class SolveReport:
    iterations: int = 0
    converged: bool = False
    relative_residual_history: list[float] = field(default_factory=list)
    inner_iteration_totals: int = 0
    wall_time: float = 0.0
    status: str = "running"

    @property
    def final_relative_residual(self) -> float:
        return self.relative_residual_history[-1] if self.relative_residual_history else float("nan")

    def history_csv(self) -> str:
        lines = ["iter,relres"]
        lines += [f"{i},{r!r}" for i, r in enumerate(self.relative_residual_history)]
        return "\n".join(lines) + "\n"


def as_operator(a) -> Operator:
    if isinstance(a, CsrMatrix):
        return a.matvec
    if isinstance(a, np.ndarray):
        return lambda v: a @ v
    if hasattr(a, "matvec"):
        return a.matvec
    if callable(a):
        return a
    raise TypeError(f"cannot use {type(a).__name__} as a linear operator")


def as_preconditioner(p) -> Operator:
    if p is None:
        return lambda r: r.copy()
    if hasattr(p, "solve"):
        return p.solve
    if callable(p):
        return p
    raise TypeError(f"cannot use {type(p).__name__} as a preconditioner")


def _inner_count(p) -> int:
    return int(getattr(p, "inner_iterations", 0) or 0)


def _ip(x: np.ndarray, y: np.ndarray) -> float:
    # trace(X^T Y) for blocks, x.y for vectors; one reduction for both
    return float(np.vdot(x, y))


def cg(a, b, pre=None, cfg: KrylovConfig = KrylovConfig(), x0=None, callback=None):
    """Preconditioned conjugate gradients.

    Stops when ``||b - A x|| <= tol * ||b||`` (recurrence residual) or after
    ``cfg.max_iterations`` steps.  Returns ``(x, SolveReport)``.
    """
    t0 = time.perf_counter()
    apply_a, apply_p = as_operator(a), as_preconditioner(pre)
    inner0 = _inner_count(pre)
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    rep = SolveReport()
    bnorm = np.sqrt(_ip(b, b))
    if bnorm == 0.0:
        rep.converged, rep.status = True, "converged"
        rep.relative_residual_history.append(0.0)
        return np.zeros_like(b), rep

    r = b - apply_a(x) if x0 is not None else b.copy()
    rel = np.sqrt(_ip(r, r)) / bnorm
    rep.relative_residual_history.append(rel)
    if rel <= cfg.tol_relative:
        rep.converged, rep.status = True, "converged"
    else:
        z = apply_p(r)
        p = z.copy()
        rz = _ip(r, z)
        for _ in range(cfg.max_iterations):
            ap = apply_a(p)
            pap = _ip(p, ap)
            if not pap > 0.0:
                raise IndefiniteOperatorError(f"p^T A p = {pap:.3e} at CG iteration {rep.iterations}")
            step = rz / pap
            x += step * p
            r -= step * ap
            rep.iterations += 1
            rel = np.sqrt(_ip(r, r)) / bnorm
            rep.relative_residual_history.append(rel)
            if callback is not None:
                callback(x)
            if rel <= cfg.tol_relative:
                rep.converged = True
                break
            z = apply_p(r)
            rz_new = _ip(r, z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        rep.status = "converged" if rep.converged else "max_iterations"
    rep.inner_iteration_totals = _inner_count(pre) - inner0
    rep.wall_time = time.perf_counter() - t0
    return x, rep


def global_cg(a, B: MultiVector, pre=None, cfg: KrylovConfig = KrylovConfig(), X0=None, callback=None):
    """Global CG for ``A X = B`` with the trace inner product <X, Y> = trace(X^T Y).

    ``a`` and ``pre`` act on (n, k) blocks.  Stops when the Frobenius norm of
    the residual block drops below ``tol * ||B||_F``.
    """
    t0 = time.perf_counter()
    apply_a, apply_p = as_operator(a), as_preconditioner(pre)
    inner0 = _inner_count(pre)
    B = np.asarray(B, dtype=np.float64)
    if B.ndim != 2 or B.shape[1] < 1:
        raise ValueError("global_cg needs an (n, k) right-hand side block with k >= 1")
    X = np.zeros_like(B) if X0 is None else np.array(X0, dtype=np.float64)
    rep = SolveReport()
    bnorm = np.sqrt(_ip(B, B))
    if bnorm == 0.0:
        rep.converged, rep.status = True, "converged"
        rep.relative_residual_history.append(0.0)
        return np.zeros_like(B), rep

    # step 1
    R = B - apply_a(X) if X0 is not None else B.copy()
    rel = np.sqrt(_ip(R, R)) / bnorm
    rep.relative_residual_history.append(rel)
    if rel <= cfg.tol_relative:
        rep.converged, rep.status = True, "converged"
    else:
        Z = apply_p(R)
        P = Z.copy()
        rz = _ip(R, Z)
        for _ in range(cfg.max_iterations):
            AP = apply_a(P)
            pap = _ip(P, AP)
            if not pap > 0.0:
                raise IndefiniteOperatorError(f"<AP, P> = {pap:.3e} at global CG iteration {rep.iterations}")
            step = rz / pap  # step 3
            X += step * P  # step 4
            R -= step * AP  # step 5
            rep.iterations += 1
            rel = np.sqrt(_ip(R, R)) / bnorm
            rep.relative_residual_history.append(rel)
            if callback is not None:
                callback(X)
            if rel <= cfg.tol_relative:
                rep.converged = True
                break
            Z = apply_p(R)  # step 6
            rz_new = _ip(R, Z)
            P = Z + (rz_new / rz) * P  # steps 7-8
            rz = rz_new
        rep.status = "converged" if rep.converged else "max_iterations"
    rep.inner_iteration_totals = _inner_count(pre) - inner0
    rep.wall_time = time.perf_counter() - t0
    return X, rep


def _givens(a: float, b: float) -> tuple[float, float]:
    if b == 0.0:
        return 1.0, 0.0
    r = np.hypot(a, b)
    return a / r, b / r


def _arnoldi_gmres(a, b, pre, cfg: KrylovConfig, flexible: bool, x0=None):
    t0 = time.perf_counter()
    apply_a, apply_p = as_operator(a), as_preconditioner(pre)
    inner0 = _inner_count(pre)
    b = np.asarray(b, dtype=np.float64)
    n = b.size
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    rep = SolveReport()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        rep.converged, rep.status = True, "converged"
        rep.relative_residual_history.append(0.0)
        return np.zeros(n), rep

    r = b - apply_a(x) if x0 is not None else b.copy()
    beta = np.linalg.norm(r)
    rep.relative_residual_history.append(beta / bnorm)
    if beta / bnorm <= cfg.tol_relative:
        rep.converged, rep.status = True, "converged"
    m = cfg.restart
    while not rep.converged and rep.iterations < cfg.max_iterations:
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n)) if flexible else None
        H = np.zeros((m + 1, m))
        cs, sn = np.zeros(m), np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        cycle_start = beta
        j_done = 0
        breakdown = False
        for j in range(m):
            zj = apply_p(V[j])
            if flexible:
                Z[j] = zj
            w = apply_a(zj)
            wnorm0 = np.linalg.norm(w)
            for i in range(j + 1):
                H[i, j] = np.dot(V[i], w)
                w -= H[i, j] * V[i]
            hnext = np.linalg.norm(w)
            # one reorthogonalization pass when MGS lost orthogonality
            if hnext > 0.0:
                extra = V[: j + 1] @ w
                if np.max(np.abs(extra)) > REORTH_THRESHOLD * hnext:
                    w -= extra @ V[: j + 1]
                    H[: j + 1, j] += extra
                    hnext = np.linalg.norm(w)
            H[j + 1, j] = hnext
            for i in range(j):
                hi, hi1 = H[i, j], H[i + 1, j]
                H[i, j] = cs[i] * hi + sn[i] * hi1
                H[i + 1, j] = -sn[i] * hi + cs[i] * hi1
            cs[j], sn[j] = _givens(H[j, j], H[j + 1, j])
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            rep.iterations += 1
            j_done = j + 1
            rel = abs(g[j + 1]) / bnorm
            rep.relative_residual_history.append(rel)
            if hnext <= 1e-14 * max(wnorm0, 1e-300):
                breakdown = True
            if breakdown or rel <= cfg.tol_relative or rep.iterations >= cfg.max_iterations:
                break
            V[j + 1] = w / hnext
        y = _back_substitute(H[:j_done, :j_done], g[:j_done])
        if flexible:
            x += y @ Z[:j_done]
        else:
            x += apply_p(y @ V[:j_done])
        r = b - apply_a(x)
        beta = np.linalg.norm(r)
        true_rel = beta / bnorm
        rep.relative_residual_history[-1] = true_rel
        if true_rel <= cfg.tol_relative or (breakdown and true_rel <= max(cfg.tol_relative, 1e-12)):
            rep.converged = True
        elif beta >= cycle_start:
            rep.status = "stagnated"
            break
    if rep.converged:
        rep.status = "converged"
    elif rep.status == "running":
        rep.status = "max_iterations"
    rep.inner_iteration_totals = _inner_count(pre) - inner0
    rep.wall_time = time.perf_counter() - t0
    return x, rep


def _back_substitute(R: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = g.size
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        y[i] = (g[i] - R[i, i + 1 : k] @ y[i + 1 : k]) / R[i, i]
    return y


def gmres(a, b, pre=None, cfg: KrylovConfig = KrylovConfig(), x0=None):
    """Restarted GMRES(restart) with a fixed right preconditioner."""
    return _arnoldi_gmres(a, b, pre, cfg, flexible=False, x0=x0)


def fgmres(a, b, pre=None, cfg: KrylovConfig = KrylovConfig(), x0=None):
    """Flexible GMRES: the preconditioned basis is stored, so ``pre`` may change between applications."""
    return _arnoldi_gmres(a, b, pre, cfg, flexible=True, x0=x0)
