"""Compressed-sparse-row matrices.

The arrays are the source of truth; a ``scipy.sparse.csr_matrix`` view over
the same buffers is built lazily and used for the hot mat-vec path (its
kernel sums each row sequentially, so results are reproducible).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps


class DimensionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    nrows: int
    ncols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    _scipy: sps.csr_matrix | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        ro = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        ci = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        va = np.ascontiguousarray(self.values, dtype=np.float64)
        if ro.shape != (self.nrows + 1,):
            raise DimensionError("row_offsets must have length nrows + 1")
        if ro[0] != 0 or np.any(np.diff(ro) < 0):
            raise ValueError("row_offsets must start at 0 and be nondecreasing")
        if ro[-1] != ci.size or ci.size != va.size:
            raise ValueError("row_offsets[nrows] must equal the number of stored values")
        if ci.size and (ci.min() < 0 or ci.max() >= self.ncols):
            raise ValueError("column index out of range")
        # strictly increasing columns within each row
        if ci.size > 1:
            step = np.diff(ci)
            row_start = np.zeros(ci.size, dtype=bool)
            row_start[ro[1:-1][ro[1:-1] < ci.size]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise ValueError("column indices must be strictly increasing within a row")
        for name, arr in (("row_offsets", ro), ("col_indices", ci), ("values", va)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    # -- construction -------------------------------------------------------

    @classmethod
    def from_coo(cls, rows, cols, vals, shape) -> "CsrMatrix":
        """Build from triplets; duplicates are summed, explicit zeros kept."""
        nrows, ncols = shape
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            new = np.ones(rows.size, dtype=bool)
            new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            group = np.cumsum(new) - 1
            summed = np.zeros(group[-1] + 1)
            np.add.at(summed, group, vals)
            rows, cols, vals = rows[new], cols[new], summed
        counts = np.bincount(rows, minlength=nrows)
        offsets = np.concatenate(([0], np.cumsum(counts)))
        return cls(nrows, ncols, offsets, cols, vals)

    @classmethod
    def from_dense(cls, a, tol: float = 0.0) -> "CsrMatrix":
        a = np.asarray(a, dtype=np.float64)
        r, c = np.nonzero(np.abs(a) > tol)
        return cls.from_coo(r, c, a[r, c], a.shape)

    @classmethod
    def from_scipy(cls, s) -> "CsrMatrix":
        s = sps.csr_matrix(s)
        s.sum_duplicates()
        s.sort_indices()
        return cls(s.shape[0], s.shape[1], s.indptr, s.indices, s.data)

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        idx = np.arange(n)
        return cls(n, n, np.arange(n + 1), idx, np.ones(n))

    @classmethod
    def diag(cls, d) -> "CsrMatrix":
        d = np.asarray(d, dtype=np.float64)
        n = d.size
        return cls(n, n, np.arange(n + 1), np.arange(n), d)

    # -- views ----------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def to_scipy(self) -> sps.csr_matrix:
        if self._scipy is None:
            s = sps.csr_matrix(
                (self.values, self.col_indices, self.row_offsets), shape=self.shape, copy=False
            )
            s.has_sorted_indices = True
            object.__setattr__(self, "_scipy", s)
        return self._scipy

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        rows = np.repeat(np.arange(self.nrows), np.diff(self.row_offsets))
        out[rows, self.col_indices] = self.values
        return out

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
        return self.col_indices[lo:hi], self.values[lo:hi]

    def diagonal(self) -> np.ndarray:
        return self.to_scipy().diagonal()

    def row_norms(self) -> np.ndarray:
        rows = np.repeat(np.arange(self.nrows), np.diff(self.row_offsets))
        return np.sqrt(np.bincount(rows, weights=self.values**2, minlength=self.nrows))

    def lower(self) -> "CsrMatrix":
        """Lower triangle including the diagonal."""
        return CsrMatrix.from_scipy(sps.tril(self.to_scipy(), format="csr"))

    def bandwidth(self) -> int:
        rows = np.repeat(np.arange(self.nrows), np.diff(self.row_offsets))
        if rows.size == 0:
            return 0
        return int(np.max(np.abs(rows - self.col_indices)))

    # -- algebra --------------------------------------------------------------

    def transpose(self) -> "CsrMatrix":
        return CsrMatrix.from_scipy(self.to_scipy().T.tocsr())

    @property
    def T(self) -> "CsrMatrix":
        return self.transpose()

    def scaled(self, c: float) -> "CsrMatrix":
        return CsrMatrix(self.nrows, self.ncols, self.row_offsets, self.col_indices, c * self.values)

    def add(self, other: "CsrMatrix", alpha: float = 1.0, beta: float = 1.0) -> "CsrMatrix":
        """Return ``alpha*self + beta*other`` on the union pattern."""
        if self.shape != other.shape:
            raise DimensionError(f"shape mismatch {self.shape} vs {other.shape}")
        return CsrMatrix.from_scipy(alpha * self.to_scipy() + beta * other.to_scipy())

    def shifted(self, sigma: float) -> "CsrMatrix":
        """``sigma*I + self``."""
        return self.add(CsrMatrix.identity(self.nrows), 1.0, sigma)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return spmv(self, x)

    def __matmul__(self, x):
        return spmv(self, x)

    def is_symmetric(self) -> bool:
        return symmetry_audit(self)


def spmv(a: CsrMatrix, x: np.ndarray) -> np.ndarray:
    """``a @ x`` for a vector or an (ncols, k) block of vectors."""
    x = np.asarray(x)
    if x.shape[0] != a.ncols:
        raise DimensionError(f"spmv: matrix has {a.ncols} columns, vector has {x.shape[0]} rows")
    return a.to_scipy() @ x


def symmetry_audit(a: CsrMatrix) -> bool:
    """Exact structural and numerical symmetry check: A(i,j) stored iff A(j,i) stored, equal values."""
    if a.nrows != a.ncols:
        return False
    t = a.to_scipy().T.tocsr()
    t.sort_indices()
    s = a.to_scipy()
    return (
        np.array_equal(s.indptr, t.indptr)
        and np.array_equal(s.indices, t.indices)
        and np.array_equal(s.data, t.data)
    )
