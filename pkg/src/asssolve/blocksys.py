"""The 4x4 block real form of the time-periodic control system.

Unknowns are stored as one contiguous float vector of length 4m,

    x = (Re y; Im y; Re q; Im q),      q = p / sqrt(nu),

and ``blocks(x)`` gives the (4, m) view.  Two equivalent systems are used:

* ``A x = bhat`` with A the assembled 4x4 block matrix (also the PRESB
  operator ``[[E, F^T], [F, -E]]`` in the same ordering), and
* ``B x = b`` with ``B = Mbar + G Kbar`` obtained by premultiplying with
  ``G1^{-1}``.  ``G`` is never materialized: it recombines blocks with two
  scalars a, b satisfying a^2 + b^2 = 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sps

from .fem import FemSystem, build_fem_system
from .sparsela import CsrMatrix, DimensionError

# (4m,) float array viewed as four m-blocks
BlockVector4 = np.ndarray


def blocks(x: np.ndarray) -> np.ndarray:
    """(4, m) (or (4, m, k)) view of a 4m-long vector (or (4m, k) block)."""
    if x.shape[0] % 4:
        raise DimensionError(f"length {x.shape[0]} is not divisible by 4")
    return x.reshape(4, x.shape[0] // 4, *x.shape[1:])


def join(x1, x2, x3, x4) -> np.ndarray:
    return np.concatenate([x1, x2, x3, x4])


@dataclass(frozen=True)
class ProblemParams:
    nu: float
    omega: float
    k: int | None = None

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if not self.omega >= 0:
            raise ValueError("omega must be nonnegative")

    @property
    def sqrt_nu(self) -> float:
        return float(np.sqrt(self.nu))

    @property
    def d(self) -> float:
        """1 + nu*omega^2."""
        return 1.0 + self.nu * self.omega**2

    @property
    def eta(self) -> float:
        return self.sqrt_nu / np.sqrt(self.d)


@dataclass(frozen=True)
class GOperator:
    a: float
    b: float

    @classmethod
    def from_params(cls, p: ProblemParams) -> "GOperator":
        c = 1.0 / np.sqrt(p.nu * p.d)
        return cls(p.omega * p.nu * c, p.sqrt_nu * c)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return apply_G(self, x)

    __call__ = apply

    def dense(self, m: int) -> np.ndarray:
        a, b = self.a, self.b
        S = np.array([[0, a, b, 0], [-a, 0, 0, b], [-b, 0, 0, -a], [0, -b, a, 0]])
        return np.kron(S, np.eye(m))


def apply_G(g: GOperator, x: np.ndarray) -> np.ndarray:
    X = blocks(x)
    a, b = g.a, g.b
    out = np.empty_like(X)
    out[0] = a * X[1] + b * X[2]
    out[1] = -a * X[0] + b * X[3]
    out[2] = -b * X[0] - a * X[3]
    out[3] = -b * X[1] + a * X[2]
    return out.reshape(x.shape)


def apply_G1(p: ProblemParams, x: np.ndarray) -> np.ndarray:
    X = blocks(x)
    w = p.omega * p.sqrt_nu
    out = np.empty_like(X)
    out[0] = X[0] + w * X[3]
    out[1] = X[1] - w * X[2]
    out[2] = -w * X[1] - X[2]
    out[3] = w * X[0] - X[3]
    return out.reshape(x.shape)


def apply_G1_inv(p: ProblemParams, x: np.ndarray) -> np.ndarray:
    # G1 is symmetric with G1^2 = (1 + nu w^2) I
    return apply_G1(p, x) / p.d


def dense_G1(p: ProblemParams, m: int) -> np.ndarray:
    w = p.omega * p.sqrt_nu
    S = np.array([[1, 0, 0, w], [0, 1, -w, 0], [0, -w, -1, 0], [w, 0, 0, -1]])
    return np.kron(S, np.eye(m))


def _apply_blockdiag(A: CsrMatrix, x: np.ndarray) -> np.ndarray:
    """blockdiag(A, A, A, A) @ x for x of length 4m (or (4m, k))."""
    X = blocks(x)
    m = X.shape[1]
    # (m, 4*k) column block so one sparse product handles all four blocks
    cols = np.moveaxis(X, 0, 1).reshape(m, -1)
    Y = A.to_scipy() @ cols
    return np.moveaxis(Y.reshape(m, 4, *X.shape[2:]), 1, 0).reshape(x.shape)


@dataclass(frozen=True, eq=False)
class BOperator:
    M: CsrMatrix
    K: CsrMatrix
    params: ProblemParams

    @cached_property
    def G(self) -> GOperator:
        return GOperator.from_params(self.params)

    @property
    def m(self) -> int:
        return self.M.nrows

    @property
    def shape(self) -> tuple[int, int]:
        return (4 * self.m, 4 * self.m)

    def apply_Mbar(self, x):
        return _apply_blockdiag(self.M, x)

    def apply_Kbar(self, x):
        """blockdiag(eta K) x."""
        return self.params.eta * _apply_blockdiag(self.K, x)

    def matvec(self, x):
        return apply_B(self, x)

    __call__ = matvec

    def dense(self) -> np.ndarray:
        m = self.m
        Mb = np.kron(np.eye(4), self.M.to_dense())
        Kb = self.params.eta * np.kron(np.eye(4), self.K.to_dense())
        return Mb + self.G.dense(m) @ Kb


def apply_B(op: BOperator, x: np.ndarray) -> np.ndarray:
    if x.shape[0] != 4 * op.m:
        raise DimensionError(f"expected length {4 * op.m}, got {x.shape[0]}")
    return op.apply_Mbar(x) + apply_G(op.G, op.apply_Kbar(x))


def build_rhs(yhat_d, params: ProblemParams) -> np.ndarray:
    """b = G1^{-1} (Re yhat; Im yhat; 0; 0)."""
    yhat_d = np.asarray(yhat_d)
    yr = np.real(yhat_d).astype(np.float64)
    yi = np.imag(yhat_d).astype(np.float64) if np.iscomplexobj(yhat_d) else np.zeros_like(yr)
    w = params.omega * params.sqrt_nu
    return join(yr, yi, -w * yi, w * yr) / params.d


def build_bhat(yhat_d) -> np.ndarray:
    yhat_d = np.asarray(yhat_d)
    yr = np.real(yhat_d).astype(np.float64)
    yi = np.imag(yhat_d).astype(np.float64) if np.iscomplexobj(yhat_d) else np.zeros_like(yr)
    z = np.zeros_like(yr)
    return join(yr, yi, z, z)


def residual_main(op: BOperator, x: np.ndarray, b: np.ndarray) -> float:
    """||bhat - A x||_2, evaluated as ||G1 (b - B x)||_2."""
    return float(np.linalg.norm(apply_G1(op.params, b - apply_B(op, x))))


def assemble_A(M: CsrMatrix, K: CsrMatrix, params: ProblemParams) -> CsrMatrix:
    """The 4x4 block real matrix, identical to [[E, F^T], [F, -E]]."""
    s, w = params.sqrt_nu, params.omega * params.sqrt_nu
    Ms, Ks = M.to_scipy(), K.to_scipy()
    A = sps.bmat(
        [
            [Ms, None, s * Ks, w * Ms],
            [None, Ms, -w * Ms, s * Ks],
            [s * Ks, -w * Ms, -Ms, None],
            [w * Ms, s * Ks, None, -Ms],
        ],
        format="csr",
    )
    return CsrMatrix.from_scipy(A)


def recover_solution(x: np.ndarray, params: ProblemParams):
    """(state y, control u) as complex vectors; u = p/nu = q/sqrt(nu)."""
    X = blocks(np.asarray(x, dtype=np.float64))
    y = X[0] + 1j * X[1]
    q = X[2] + 1j * X[3]
    return y, q / params.sqrt_nu


def kkt_residual(fem: FemSystem, params: ProblemParams, y, u) -> float:
    """Relative residual of the 3x3 complex first-order system for (y, u, p = nu u)."""
    M, K = fem.M.to_scipy(), fem.K.to_scipy()
    w = params.omega
    p = params.nu * u
    r1 = M @ y + (K @ p - 1j * w * (M @ p)) - M @ fem.ybar_d
    r2 = params.nu * (M @ u) - M @ p
    r3 = K @ y + 1j * w * (M @ y) - M @ u
    res = np.sqrt(np.linalg.norm(r1) ** 2 + np.linalg.norm(r2) ** 2 + np.linalg.norm(r3) ** 2)
    return float(res / np.linalg.norm(M @ fem.ybar_d))


@dataclass(frozen=True, eq=False)
class PresbForms:
    """E = blockdiag(M, M); F = [[sK, -swM], [swM, sK]] with s = sqrt(nu)."""

    M: CsrMatrix
    K: CsrMatrix
    params: ProblemParams

    @cached_property
    def E(self) -> CsrMatrix:
        return CsrMatrix.from_scipy(sps.block_diag([self.M.to_scipy()] * 2, format="csr"))

    @cached_property
    def F(self) -> CsrMatrix:
        s, w = self.params.sqrt_nu, self.params.omega * self.params.sqrt_nu
        Ms, Ks = self.M.to_scipy(), self.K.to_scipy()
        return CsrMatrix.from_scipy(sps.bmat([[s * Ks, -w * Ms], [w * Ms, s * Ks]], format="csr"))

    @cached_property
    def E_plus_F(self) -> CsrMatrix:
        return self.E.add(self.F)

    @cached_property
    def E_plus_FT(self) -> CsrMatrix:
        return self.E.add(self.F.T)

    @cached_property
    def calK(self) -> CsrMatrix:
        E, F = self.E.to_scipy(), self.F.to_scipy()
        return CsrMatrix.from_scipy(sps.bmat([[E, F.T], [F, -E]], format="csr"))

    @cached_property
    def calC(self) -> CsrMatrix:
        """PRESB preconditioner [[E + F + F^T, F^T], [F, -E]]."""
        E, F = self.E.to_scipy(), self.F.to_scipy()
        return CsrMatrix.from_scipy(sps.bmat([[E + F + F.T, F.T], [F, -E]], format="csr"))

    @cached_property
    def S(self) -> CsrMatrix:
        """(1 + omega sqrt(nu)) M + sqrt(nu) K."""
        s = self.params.sqrt_nu
        return self.M.add(self.K, 1.0 + self.params.omega * s, s)

    def apply_calK(self, x: np.ndarray) -> np.ndarray:
        return self.calK.matvec(x)


def build_presb_forms(fem: FemSystem, params: ProblemParams) -> PresbForms:
    return PresbForms(fem.M, fem.K, params)


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """Everything needed to run any of the solvers on one (k, nu, omega) instance."""

    fem: FemSystem
    params: ProblemParams

    @cached_property
    def op(self) -> BOperator:
        return BOperator(self.fem.M, self.fem.K, self.params)

    @cached_property
    def b(self) -> np.ndarray:
        return build_rhs(self.fem.yhat_d, self.params)

    @cached_property
    def bhat(self) -> np.ndarray:
        return build_bhat(self.fem.yhat_d)

    @cached_property
    def A(self) -> CsrMatrix:
        return assemble_A(self.fem.M, self.fem.K, self.params)

    @cached_property
    def presb(self) -> PresbForms:
        return build_presb_forms(self.fem, self.params)

    @property
    def m(self) -> int:
        return self.fem.m

    def residual(self, x: np.ndarray) -> float:
        return residual_main(self.op, x, self.b)

    def relative_residual(self, x: np.ndarray) -> float:
        return self.residual(x) / float(np.linalg.norm(self.bhat))


def build_problem(k: int, nu: float, omega: float, fem: FemSystem | None = None) -> ControlProblem:
    fem = fem if fem is not None else build_fem_system(k)
    return ControlProblem(fem, ProblemParams(nu, omega, fem.grid.k))
