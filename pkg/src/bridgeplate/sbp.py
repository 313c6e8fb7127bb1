"""Second-order summation-by-parts finite-difference operators.

One-dimensional matrices are built in x (interior nodes, Dirichlet ends
removed) and in y (all layers, one-sided closures at the free edges), then
lifted to the plate with Kronecker products:

    Dxx = I_y (x) D2x      Dyy = D2y (x) I_x
    Dy  = D1y (x) I_x      Dxy = D1y (x) D1x
    H   = Hy  (x) Hx

The norm ``Hy = dy * diag(1/2, 1, ..., 1, 1/2)`` pairs with ``D1y`` so that
``Hy D1y + (Hy D1y)^T = E_K - E_0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DimensionMismatch
from .grid import Grid

MIN_Y_NODES = 4  # width of the one-sided second-derivative closure


def first_derivative(n: int, h: float) -> sp.csr_matrix:
    """Centered interior rows, first-order one-sided first and last rows."""
    if n < 2:
        raise ConfigError("first derivative needs at least 2 nodes")
    rows, cols, vals = [0, 0], [0, 1], [-1.0, 1.0]
    for i in range(1, n - 1):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-0.5, 0.5]
    rows += [n - 1, n - 1]
    cols += [n - 2, n - 1]
    vals += [-1.0, 1.0]
    return sp.csr_matrix((np.array(vals) / h, (rows, cols)), shape=(n, n))


def second_derivative_dirichlet(n: int, h: float) -> sp.csr_matrix:
    """Tridiagonal (1, -2, 1)/h^2 on interior nodes with homogeneous Dirichlet ends."""
    main = -2.0 * np.ones(n)
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h**2


def second_derivative_sbp(n: int, h: float) -> sp.csr_matrix:
    """Centered interior rows with the (2, -5, 4, -1) one-sided closures."""
    if n < MIN_Y_NODES:
        raise ConfigError(
            f"second-derivative closure needs at least {MIN_Y_NODES} y-nodes, got {n}"
        )
    rows, cols, vals = [0] * 4, [0, 1, 2, 3], [2.0, -5.0, 4.0, -1.0]
    for i in range(1, n - 1):
        rows += [i, i, i]
        cols += [i - 1, i, i + 1]
        vals += [1.0, -2.0, 1.0]
    rows += [n - 1] * 4
    cols += [n - 4, n - 3, n - 2, n - 1]
    vals += [-1.0, 4.0, -5.0, 2.0]
    return sp.csr_matrix((np.array(vals) / h**2, (rows, cols)), shape=(n, n))


def trapezoid_norm(n: int, h: float) -> sp.dia_matrix:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return sp.diags(w, format="csr")


@dataclass(frozen=True)
class Sbp1D:
    D1x: sp.csr_matrix
    D2x: sp.csr_matrix
    Hx: sp.csr_matrix
    D1y: sp.csr_matrix
    D2y: sp.csr_matrix
    Hy: sp.csr_matrix
    E0: sp.csr_matrix
    EK: sp.csr_matrix

    def sbp_defect(self) -> float:
        """Max-norm defect of ``Hy D1y + (Hy D1y)^T - (E_K - E_0)``."""
        Q = self.Hy @ self.D1y
        R = Q + Q.T - (self.EK - self.E0)
        return float(abs(R).max()) if R.nnz else 0.0


@dataclass(frozen=True)
class Sbp2D:
    Dxx: sp.csr_matrix
    Dyy: sp.csr_matrix
    Dy: sp.csr_matrix
    Dxy: sp.csr_matrix
    H: sp.csr_matrix
    Dxxxx: sp.csr_matrix
    Dyyyy: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return self.H.diagonal()


def build_sbp_1d(grid: Grid) -> Sbp1D:
    nx, ny = grid.nx, grid.ny
    e0 = sp.csr_matrix(([1.0], ([0], [0])), shape=(ny, ny))
    eK = sp.csr_matrix(([1.0], ([ny - 1], [ny - 1])), shape=(ny, ny))
    return Sbp1D(
        D1x=first_derivative(nx, grid.dx),
        D2x=second_derivative_dirichlet(nx, grid.dx),
        Hx=sp.identity(nx, format="csr") * grid.dx,
        D1y=first_derivative(ny, grid.dy),
        D2y=second_derivative_sbp(ny, grid.dy),
        Hy=trapezoid_norm(ny, grid.dy),
        E0=e0,
        EK=eK,
    )


def build_sbp_2d(ops: Sbp1D, grid: Grid) -> Sbp2D:
    if ops.D2x.shape[0] != grid.nx or ops.D2y.shape[0] != grid.ny:
        raise DimensionMismatch(
            f"1D operators are {ops.D2x.shape[0]}x{ops.D2y.shape[0]}, grid is {grid.nx}x{grid.ny}"
        )
    Ix = sp.identity(grid.nx, format="csr")
    Iy = sp.identity(grid.ny, format="csr")
    Dxx = sp.kron(Iy, ops.D2x, format="csr")
    Dyy = sp.kron(ops.D2y, Ix, format="csr")
    Dy = sp.kron(ops.D1y, Ix, format="csr")
    Dxy = sp.kron(ops.D1y, ops.D1x, format="csr")
    H = sp.kron(ops.Hy, ops.Hx, format="csr")
    return Sbp2D(
        Dxx=Dxx,
        Dyy=Dyy,
        Dy=Dy,
        Dxy=Dxy,
        H=H,
        Dxxxx=(Dxx.T @ H @ Dxx).tocsr(),
        # lifted to 2D so the norm H conforms
        Dyyyy=(Dyy.T @ H @ Dyy).tocsr(),
    )


def build_operators(grid: Grid) -> tuple[Sbp1D, Sbp2D]:
    ops1 = build_sbp_1d(grid)
    return ops1, build_sbp_2d(ops1, grid)


def dump_triplets(A: sp.spmatrix, path: str | Path) -> None:
    """Write ``row,col,value`` lines (0-based, row-major order, 17 digits)."""
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    with open(path, "w", newline="\n") as fh:
        fh.write("row,col,value\n")
        for i in order:
            fh.write(f"{C.row[i]},{C.col[i]},{C.data[i]:.17g}\n")


def load_triplets(path: str | Path, shape: tuple[int, int]) -> sp.csr_matrix:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix(shape)
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=shape)
