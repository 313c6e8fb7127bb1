"""Discrete bilaplacian with free edges at y = +-d, and static solves.

The stiffness is assembled from the plate bilinear form

    a(u, v) = <uxx, vxx> + <uyy, vyy> + sigma (<uxx, vyy> + <uyy, vxx>) + 2 (1 - sigma) <uxy, vxy>

with every inner product taken in the SBP norm H.  Writing ``G`` for that
symmetric Gram matrix, the operator acting on nodal values is ``K = H^{-1} G``.
``K`` itself is not symmetric, but it is self-adjoint in the H inner product,
so every linear system ``(a I + b K) x = r`` is solved as the SPD system
``(a H + b G) x = H r``.
"""

from __future__ import annotations

import csv
from functools import cached_property
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, ConvergenceError, SolverError
from .grid import Grid
from .sbp import Sbp2D

DIRECT_SOLVE_LIMIT = 50_000
SOLVE_RTOL = 1e-10


class SpdSolver:
    """Factorization handle for a sparse symmetric positive-definite matrix.

    Uses a sparse LU factorization up to ``DIRECT_SOLVE_LIMIT`` unknowns and
    Jacobi-preconditioned conjugate gradients above it.  The handle holds no
    mutable state after construction, so concurrent ``solve`` calls are safe.
    """

    def __init__(self, S: sp.spmatrix, rtol: float = SOLVE_RTOL):
        self.S = sp.csc_matrix(S)
        self.rtol = rtol
        self.n = self.S.shape[0]
        self.direct = self.n <= DIRECT_SOLVE_LIMIT
        if self.direct:
            try:
                self._lu = spla.splu(self.S, permc_spec="MMD_AT_PLUS_A")
            except RuntimeError as exc:  # singular factor
                raise SolverError(f"factorization failed: {exc}") from exc
        else:
            diag = self.S.diagonal()
            if np.any(diag <= 0):
                raise SolverError("matrix has a non-positive diagonal; not SPD")
            self._precond = sp.diags(1.0 / diag)

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self.direct:
            x = self._lu.solve(np.asarray(b, dtype=float))
        else:
            x, info = spla.cg(self.S, b, rtol=self.rtol, maxiter=10 * self.n, M=self._precond)
            if info != 0:
                raise ConvergenceError(f"conjugate gradients stopped with info={info}")
        if not np.all(np.isfinite(x)):
            raise SolverError("linear solve produced non-finite values")
        return x


@dataclass
class PlateSystem:
    grid: Grid
    ops: Sbp2D = field(repr=False)
    G: sp.csr_matrix = field(repr=False)
    H: sp.csr_matrix = field(repr=False)
    K: sp.csr_matrix = field(repr=False)
    sigma: float
    lambda_coef: float = 1.0

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return self.H.diagonal()

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.K @ u

    @cached_property
    def _G_ext(self) -> sp.csr_matrix:
        return self.G.astype(np.longdouble)

    def gram_apply(self, u: np.ndarray) -> np.ndarray:
        """``G u`` accumulated in extended precision, rounded once.

        For smooth ``u`` the product cancels by roughly ``cond(G)``, so the
        plain binary64 result carries errors near 1e-6 relative.
        """
        return np.asarray(self._G_ext @ np.asarray(u, dtype=np.longdouble), dtype=float)

    def energy_norm2(self, u: np.ndarray) -> float:
        """``u^T G u`` with the assembled ``G``, accumulated in extended precision.

        This is the quadratic form the time stepper conserves.  It can differ
        from ``energy_norm2_factored`` by about ``eps * cond(G)`` relative,
        because the stored ``G`` carries its own rounding.
        """
        ue = np.asarray(u, dtype=np.longdouble)
        return float(ue @ (self._G_ext @ ue))

    def energy_norm2_factored(self, u: np.ndarray) -> float:
        """``a(u, u)`` summed from the second differences, without forming ``G u``.

        Agrees with ``energy_norm2`` in exact arithmetic but keeps full
        relative accuracy for smooth ``u``, where ``G u`` cancels heavily.
        """
        ops = self.ops
        a = ops.Dxx @ u
        b = ops.Dyy @ u
        c = ops.Dxy @ u
        s = self.sigma
        dens = a * a + b * b + 2.0 * s * a * b + 2.0 * (1.0 - s) * c * c
        return float(self.weights @ dens)

    def shifted_solver(self, a: float, b: float) -> SpdSolver:
        """Solver for ``(a I + b K) x = r``; call ``solve_shifted`` with it."""
        return SpdSolver(a * self.H + b * self.G)

    def solve_shifted(self, solver: SpdSolver, r: np.ndarray) -> np.ndarray:
        return solver.solve(self.H @ r)


def assemble_plate(ops: Sbp2D, grid: Grid, sigma: float, lambda_coef: float = 1.0) -> PlateSystem:
    if not (0.0 < sigma < 0.5):
        raise ConfigError(f"sigma ∉ (0, 1/2): sigma={sigma!r}")
    H = ops.H
    G = (
        ops.Dxx.T @ H @ ops.Dxx
        + ops.Dyy.T @ H @ ops.Dyy
        + sigma * (ops.Dxx.T @ H @ ops.Dyy + ops.Dyy.T @ H @ ops.Dxx)
        + 2.0 * (1.0 - sigma) * (ops.Dxy.T @ H @ ops.Dxy)
    ).tocsr()
    # symmetric by construction; drop round-off asymmetry
    G = ((G + G.T) * 0.5).tocsr()
    G.sort_indices()
    K = (sp.diags(1.0 / H.diagonal()) @ G).tocsr()
    return PlateSystem(grid=grid, ops=ops, G=G, H=H, K=K, sigma=sigma, lambda_coef=lambda_coef)


def solve_static(system: PlateSystem, f: np.ndarray, refine_steps: int = 3) -> np.ndarray:
    """Solve ``K u = f`` for the static deflection.

    ``G`` is ill conditioned (about ``dy^-4``), so a plain solve carries a
    forward error near ``eps cond(G)``.  A few refinement steps with the
    residual accumulated in extended precision recover a solution that is
    accurate for the assembled matrix, which keeps the solve linear and
    symmetry-preserving to near rounding level.  The acceptance check is on the
    normwise backward error ``||K u - f|| / (|| |K| |u| || + ||f||)`` in the H
    norm.
    """
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ConfigError("static load must be finite")
    if not np.any(f):
        return np.zeros_like(f)
    solver = SpdSolver(system.G)
    b = system.H @ f
    u = solver.solve(b)
    G_ext = system.G.astype(np.longdouble)
    b_ext = b.astype(np.longdouble)
    u_ext = u.astype(np.longdouble)
    for _ in range(refine_steps):
        r = (b_ext - G_ext @ u_ext).astype(float)
        u_ext = u_ext + solver.solve(r).astype(np.longdouble)
    u = u_ext.astype(float)
    w = system.weights
    hnorm = lambda v: float(np.sqrt(w @ (v * v)))
    res = system.K @ u - f
    eta = hnorm(res) / (hnorm(abs(system.K) @ np.abs(u)) + hnorm(f))
    if eta > SOLVE_RTOL:
        raise SolverError(f"static solve backward error {eta:.3e} exceeds {SOLVE_RTOL:.0e}")
    return u


def write_field_csv(grid: Grid, u: np.ndarray, path: str | Path) -> None:
    """Write an ``x,y,u`` surface, one row per node in storage order."""
    x, y = grid.mesh()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "u"])
        for xi, yi, ui in zip(x, y, np.asarray(u, dtype=float)):
            w.writerow([f"{xi:.17g}", f"{yi:.17g}", f"{ui:.17g}"])
