"""Q1 finite elements on a uniform mesh of the unit square.

Homogeneous Dirichlet conditions are imposed by dropping boundary nodes.
Interior nodes are numbered lexicographically with x running fastest, so
node (i, j) sits at ((i+1)h, (j+1)h) and has index ``j*n + i`` where
``n = 2**k - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .sparsela import CsrMatrix, DimensionError, spmv

# local node order: (0,0), (1,0), (1,1), (0,1), counterclockwise
ELEMENT_MASS = np.array(
    [[4.0, 2.0, 1.0, 2.0], [2.0, 4.0, 2.0, 1.0], [1.0, 2.0, 4.0, 2.0], [2.0, 1.0, 2.0, 4.0]]
) / 36.0
ELEMENT_STIFFNESS = np.array(
    [[4.0, -1.0, -2.0, -1.0], [-1.0, 4.0, -1.0, -2.0], [-2.0, -1.0, 4.0, -1.0], [-1.0, -2.0, -1.0, 4.0]]
) / 6.0


@dataclass(frozen=True)
class GridConfig:
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise ValueError(f"mesh exponent k must be an integer >= 2, got {self.k}")

    @property
    def h(self) -> float:
        return 2.0 ** (-self.k)

    @property
    def n(self) -> int:
        """Interior nodes per coordinate direction."""
        return 2**self.k - 1

    @property
    def m(self) -> int:
        return self.n**2

    @property
    def theta(self) -> float:
        """Diagonal entry of the Q1 mass matrix, (4/9) h^2."""
        return 4.0 * self.h**2 / 9.0

    def node_coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        t = self.h * np.arange(1, self.n + 1)
        x, y = np.meshgrid(t, t, indexing="xy")
        return x.ravel(), y.ravel()


def _element_connectivity(grid: GridConfig) -> np.ndarray:
    """(N*N, 4) interior indices of each cell's corners, -1 for boundary nodes."""
    N, n = 2**grid.k, grid.n
    ex, ey = np.meshgrid(np.arange(N), np.arange(N), indexing="xy")
    ex, ey = ex.ravel(), ey.ravel()
    corners = [(ex, ey), (ex + 1, ey), (ex + 1, ey + 1), (ex, ey + 1)]
    conn = np.empty((ex.size, 4), dtype=np.int64)
    for a, (gx, gy) in enumerate(corners):
        interior = (gx > 0) & (gx < N) & (gy > 0) & (gy < N)
        conn[:, a] = np.where(interior, (gy - 1) * n + (gx - 1), -1)
    return conn


def _assemble(grid: GridConfig, element: np.ndarray) -> CsrMatrix:
    conn = _element_connectivity(grid)
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    vals = np.tile(element.ravel(), conn.shape[0])
    keep = (rows >= 0) & (cols >= 0)
    return CsrMatrix.from_coo(rows[keep], cols[keep], vals[keep], (grid.m, grid.m))


def assemble_mass(grid: GridConfig) -> CsrMatrix:
    return _assemble(grid, grid.h**2 * ELEMENT_MASS)


def assemble_stiffness(grid: GridConfig) -> CsrMatrix:
    # the Q1 Laplacian element matrix is independent of h in 2D
    return _assemble(grid, ELEMENT_STIFFNESS)


def target_state(x, y):
    """(2x-1)^2 (2y-1)^2 on the open quarter (0, 1/2)^2, zero elsewhere."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    inside = (x > 0.0) & (x < 0.5) & (y > 0.0) & (y < 0.5)
    return np.where(inside, (2 * x - 1) ** 2 * (2 * y - 1) ** 2, 0.0)


def interpolate_target(grid: GridConfig) -> np.ndarray:
    return target_state(*grid.node_coordinates())


def rhs_hat(M: CsrMatrix, ybar_d) -> np.ndarray:
    ybar_d = np.asarray(ybar_d)
    if ybar_d.shape[0] != M.ncols:
        raise DimensionError(f"target has {ybar_d.shape[0]} entries, mass matrix is {M.shape}")
    return spmv(M, ybar_d)


@dataclass(frozen=True)
class FemSystem:
    grid: GridConfig
    M: CsrMatrix
    K: CsrMatrix
    ybar_d: np.ndarray

    @cached_property
    def yhat_d(self) -> np.ndarray:
        return rhs_hat(self.M, self.ybar_d)

    @property
    def m(self) -> int:
        return self.grid.m


def build_fem_system(k: int | GridConfig) -> FemSystem:
    grid = k if isinstance(k, GridConfig) else GridConfig(k)
    return FemSystem(grid, assemble_mass(grid), assemble_stiffness(grid), interpolate_target(grid))
