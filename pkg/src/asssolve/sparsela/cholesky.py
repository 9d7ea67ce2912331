"""Exact and incomplete Cholesky factorizations of sparse SPD matrices.

The exact factor is computed in banded storage by LAPACK (``pbtrf``) after an
optional reverse Cuthill-McKee reordering; the incomplete factor is a
row-oriented threshold IC written here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
import scipy.linalg as sla
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .csr import CsrMatrix, DimensionError

IC_SHIFT = 1e-3


class NotSPDError(np.linalg.LinAlgError):
    """Non-positive pivot during (incomplete) Cholesky."""

    def __init__(self, msg: str, row: int | None = None):
        super().__init__(msg)
        self.row = row


# ---------------------------------------------------------------------------
# exact factorization


@dataclass(frozen=True)
class CholeskyFactor:
    n: int
    band: np.ndarray  # lower banded storage of L, shape (bw+1, n), permuted ordering
    permutation: np.ndarray | None = None

    @property
    def L(self) -> CsrMatrix:
        """The factor as a lower-triangular CSR matrix (permuted ordering)."""
        bw1, n = self.band.shape
        rows, cols, vals = [], [], []
        for d in range(bw1):
            j = np.arange(n - d)
            v = self.band[d, : n - d]
            keep = v != 0.0
            rows.append(j[keep] + d)
            cols.append(j[keep])
            vals.append(v[keep])
        return CsrMatrix.from_coo(
            np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (n, n)
        )

    def solve(self, b: np.ndarray) -> np.ndarray:
        return cholesky_solve(self, b)


def cholesky_factor(a: CsrMatrix, reorder: bool | None = None) -> CholeskyFactor:
    """Factor ``a = L L^T``. Raises NotSPDError on a non-positive pivot."""
    if a.nrows != a.ncols:
        raise DimensionError("Cholesky needs a square matrix")
    s = a.to_scipy()
    perm = None
    if reorder is None:
        reorder = a.bandwidth() > 2 * int(np.sqrt(a.nrows)) + 2
    if reorder:
        perm = reverse_cuthill_mckee(s.tocsr(), symmetric_mode=True).astype(np.int64)
        s = s[perm][:, perm].tocsr()
    low = s.tocoo()
    keep = low.row >= low.col
    r, c, v = low.row[keep], low.col[keep], low.data[keep]
    bw = int(np.max(r - c)) if r.size else 0
    band = np.zeros((bw + 1, a.nrows))
    np.add.at(band, (r - c, c), v)
    try:
        lband = sla.cholesky_banded(band, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError(f"matrix is not SPD: {exc}") from exc
    return CholeskyFactor(a.nrows, lband, perm)


def cholesky_solve(f: CholeskyFactor, b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != f.n:
        raise DimensionError(f"rhs has {b.shape[0]} rows, factor is {f.n}x{f.n}")
    if f.permutation is None:
        return sla.cho_solve_banded((f.band, True), b, check_finite=False)
    x = np.empty_like(b)
    x[f.permutation] = sla.cho_solve_banded((f.band, True), b[f.permutation], check_finite=False)
    return x


# ---------------------------------------------------------------------------
# incomplete factorization


@numba.njit(cache=True)
def _ichol_kernel(n, indptr, indices, data, thresh):
    cap = max(2 * data.size, 16)
    lcol = np.empty(cap, np.int64)
    lval = np.empty(cap, np.float64)
    lnext = np.empty(cap, np.int64)
    lrow = np.empty(cap, np.int64)
    lptr = np.zeros(n + 1, np.int64)
    head = np.full(n, -1, np.int64)
    tail = np.full(n, -1, np.int64)
    diag = np.empty(n, np.float64)
    w = np.zeros(n, np.float64)
    mark = np.zeros(n, np.bool_)
    nnz = 0
    for i in range(n):
        lo = i
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j > i:
                continue
            w[j] += data[p]
            mark[j] = True
            if j < lo:
                lo = j
        for k in range(lo, i):
            if not mark[k]:
                continue
            lik = w[k] / diag[k]
            w[k] = 0.0
            mark[k] = False
            if abs(lik) < thresh[i] or lik == 0.0:
                continue
            # rows j in (k, i) holding L[j, k]
            q = head[k]
            while q >= 0:
                j = lrow[q]
                w[j] -= lik * lval[q]
                mark[j] = True
                q = lnext[q]
            w[i] -= lik * lik
            if nnz + 1 >= cap:
                cap *= 2
                lcol = _grow_i(lcol, cap)
                lval = _grow_f(lval, cap)
                lnext = _grow_i(lnext, cap)
                lrow = _grow_i(lrow, cap)
            lcol[nnz] = k
            lrow[nnz] = i
            lval[nnz] = lik
            lnext[nnz] = -1
            if tail[k] >= 0:
                lnext[tail[k]] = nnz
            else:
                head[k] = nnz
            tail[k] = nnz
            nnz += 1
        d = w[i]
        w[i] = 0.0
        mark[i] = False
        if not d > 0.0:
            return lptr, lcol[:nnz], lval[:nnz], i
        diag[i] = np.sqrt(d)
        if nnz + 1 >= cap:
            cap *= 2
            lcol = _grow_i(lcol, cap)
            lval = _grow_f(lval, cap)
            lnext = _grow_i(lnext, cap)
            lrow = _grow_i(lrow, cap)
        lcol[nnz] = i
        lrow[nnz] = i
        lval[nnz] = diag[i]
        lnext[nnz] = -1
        nnz += 1
        lptr[i + 1] = nnz
    return lptr, lcol[:nnz], lval[:nnz], -1


@numba.njit(cache=True)
def _grow_i(a, cap):
    out = np.empty(cap, np.int64)
    out[: a.size] = a
    return out


@numba.njit(cache=True)
def _grow_f(a, cap):
    out = np.empty(cap, np.float64)
    out[: a.size] = a
    return out


@numba.njit(cache=True)
def _lower_solve(lptr, lcol, lval, b):
    n = lptr.size - 1
    y = b.copy()
    for i in range(n):
        end = lptr[i + 1] - 1
        for c in range(y.shape[1]):
            s = y[i, c]
            for p in range(lptr[i], end):
                s -= lval[p] * y[lcol[p], c]
            y[i, c] = s / lval[end]
    return y


@numba.njit(cache=True)
def _upper_solve(lptr, lcol, lval, y):
    # solves L^T x = y using the row storage of L
    n = lptr.size - 1
    x = y.copy()
    for i in range(n - 1, -1, -1):
        end = lptr[i + 1] - 1
        for c in range(x.shape[1]):
            xi = x[i, c] / lval[end]
            x[i, c] = xi
            for p in range(lptr[i], end):
                x[lcol[p], c] -= lval[p] * xi
    return x


@dataclass(frozen=True)
class IncompleteCholeskyFactor:
    L: CsrMatrix
    drop_tolerance: float
    shift: float = 0.0  # relative diagonal shift used after a breakdown retry

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Apply ``(L L^T)^{-1}`` to a vector or an (n, k) block."""
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.L.nrows:
            raise DimensionError("rhs size does not match the factor")
        b2 = b.reshape(b.shape[0], -1)
        y = _lower_solve(self.L.row_offsets, self.L.col_indices, self.L.values, np.ascontiguousarray(b2))
        x = _upper_solve(self.L.row_offsets, self.L.col_indices, self.L.values, y)
        return x.reshape(b.shape)

    __call__ = solve


def ichol(a: CsrMatrix, droptol: float = 1e-3) -> IncompleteCholeskyFactor:
    """Threshold incomplete Cholesky.

    Entry L(i, j), j < i, is discarded when ``|L(i, j)| < droptol * ||A(i, :)||_2``.
    With ``droptol == 0`` the result is the exact Cholesky factor.
    """
    if droptol < 0:
        raise ValueError("droptol must be nonnegative")
    if a.nrows != a.ncols:
        raise DimensionError("ichol needs a square matrix")
    thresh = droptol * a.row_norms()
    lptr, lcol, lval, bad = _ichol_kernel(a.nrows, a.row_offsets, a.col_indices, a.values, thresh)
    if bad >= 0:
        raise NotSPDError(f"incomplete Cholesky breakdown: non-positive pivot in row {bad}", row=int(bad))
    L = CsrMatrix(a.nrows, a.nrows, lptr, lcol, lval)
    return IncompleteCholeskyFactor(L, droptol)


def ichol_with_fallback(a: CsrMatrix, droptol: float = 1e-3) -> IncompleteCholeskyFactor:
    """ichol, retried once on ``A + 1e-3*diag(A)`` after a breakdown."""
    try:
        return ichol(a, droptol)
    except NotSPDError:
        shifted = a.add(CsrMatrix.diag(a.diagonal()), 1.0, IC_SHIFT)
        f = ichol(shifted, droptol)
        return IncompleteCholeskyFactor(f.L, droptol, IC_SHIFT)
