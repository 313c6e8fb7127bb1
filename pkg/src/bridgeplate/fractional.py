r"""Tempered fractional damping through its diffusive representation.

The tempered Caputo derivative of order ``alpha`` with tempering ``beta`` is
realized as the output of a family of scalar relaxation equations

    phi_t + (theta^2 + beta) phi = xi(theta) u_t,   phi(theta, 0) = 0,
    D^{alpha,beta} u = (2 sin(alpha pi) / pi) \int_0^\infty phi xi dtheta,

with ``xi(theta) = |theta|^{(2 alpha - 1)/2}``.  The theta-integral is
truncated to ``[0, R]`` and sampled on ``L + 1`` equispaced nodes; each node
is advanced with a Crank-Nicolson step driven by the midpoint velocity.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InstabilityDetected

OVERFLOW_GUARD = 1e300


@dataclass(frozen=True)
class FractionalParams:
    """Diffusive-representation parameters.

    ``beta_diff`` is the tempering rate (not the Newmark beta).  With
    ``paper_literal_dtheta`` the quadrature weight becomes ``2R/L`` while the
    nodes stay at ``l R / L``.  With ``paper_literal_phi_update`` the input
    coefficient of the relaxation step is ``dt / (2 + dt a)`` instead of the
    Crank-Nicolson value ``2 dt / (2 + dt a)``.
    """

    alpha: float
    beta_diff: float
    a1: float
    R: float
    L: int
    paper_literal_dtheta: bool = False
    paper_literal_phi_update: bool = False

    def validate(self) -> None:
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError(f"alpha ∉ (0, 1): alpha={self.alpha!r}")
        if not (self.beta_diff > 0.0):
            raise ConfigError(f"beta_diff must be positive, got {self.beta_diff!r}")
        if self.a1 < 0.0:
            raise ConfigError(f"a1 must be non-negative, got {self.a1!r}")
        if not (self.R > 0.0):
            raise ConfigError(f"R must be positive, got {self.R!r}")
        if int(self.L) != self.L or self.L < 1:
            raise ConfigError(f"L must be a positive integer, got {self.L!r}")

    @property
    def dtheta(self) -> float:
        """Node spacing ``R / L``."""
        return self.R / self.L

    @property
    def weight(self) -> float:
        """Quadrature weight attached to every retained node."""
        return (2.0 if self.paper_literal_dtheta else 1.0) * self.R / self.L

    @property
    def theta_nodes(self) -> np.ndarray:
        return self.dtheta * np.arange(self.L + 1)

    @property
    def exponent(self) -> float:
        return (2.0 * self.alpha - 1.0) / 2.0

    @property
    def retained(self) -> np.ndarray:
        """Boolean mask of nodes in the quadrature; theta = 0 is singular when alpha < 1/2."""
        mask = np.ones(self.L + 1, dtype=bool)
        if self.exponent < 0.0:
            mask[0] = False
        return mask

    @property
    def xi(self) -> np.ndarray:
        """``xi(theta_l)``; the dropped singular node is set to 0."""
        th = self.theta_nodes
        out = np.zeros_like(th)
        m = self.retained
        if self.exponent == 0.0:
            out[m] = 1.0
        else:
            out[m] = np.abs(th[m]) ** self.exponent
        return out

    @property
    def kappa(self) -> float:
        return self.a1 * math.sin(self.alpha * math.pi) / math.pi

    def rates(self) -> np.ndarray:
        return self.theta_nodes**2 + self.beta_diff

    def decay_factors(self, dt: float) -> np.ndarray:
        a = self.rates()
        return (2.0 - dt * a) / (2.0 + dt * a)

    def input_gains(self, dt: float) -> np.ndarray:
        """Coefficient multiplying ``xi_l * v_half`` in the relaxation step."""
        scale = 1.0 if self.paper_literal_phi_update else 2.0
        return scale * dt / (2.0 + dt * self.rates())

    def coefficients(self, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """Per-node ``(kappa_l, k_l)`` with the ``a1`` gain absorbed.

        ``kappa_l`` multiplies ``phi_l^n`` and ``k_l`` multiplies each of
        ``U'^n`` and ``U'^{n+1}`` in the damping force at the new time level.
        Dropped nodes get zero coefficients.
        """
        s = self.a1 * math.sin(self.alpha * math.pi) / math.pi
        xi = self.xi
        kappa_l = 2.0 * s * xi * self.decay_factors(dt)
        k_l = s * xi**2 * self.input_gains(dt)
        m = self.retained
        return np.where(m, kappa_l, 0.0), np.where(m, k_l, 0.0)


@dataclass
class FractionalState:
    phi: np.ndarray = field(repr=False)  # shape (L + 1, n)

    def copy(self) -> "FractionalState":
        return FractionalState(self.phi.copy())


def init_fractional(p: FractionalParams, n: int) -> FractionalState:
    p.validate()
    return FractionalState(np.zeros((int(p.L) + 1, n)))


def step_phi(
    state: FractionalState, vdot_half: np.ndarray, dt: float, p: FractionalParams
) -> FractionalState:
    rho = p.decay_factors(dt)
    gain = p.input_gains(dt) * p.xi
    phi = rho[:, None] * state.phi + gain[:, None] * np.asarray(vdot_half)[None, :]
    peak = np.max(np.abs(phi)) if phi.size else 0.0
    if not np.isfinite(peak) or peak > OVERFLOW_GUARD:
        raise InstabilityDetected("auxiliary fractional field overflowed")
    return FractionalState(phi)


def fractional_force(state: FractionalState, p: FractionalParams) -> np.ndarray:
    """``(2 sin(alpha pi)/pi) sum_l phi_l xi_l w``, without the ``a1`` gain."""
    c = 2.0 * math.sin(p.alpha * math.pi) / math.pi
    return c * p.weight * (p.xi @ state.phi)


def c1_contribution(
    state: FractionalState,
    udot_n: np.ndarray,
    uddot_n: np.ndarray,
    dt: float,
    p: FractionalParams,
) -> tuple[np.ndarray, float]:
    """Explicit part of the fractional damping force and its implicit scalar.

    Returns ``(sum kappa_l phi_l w + 2 sum k_l w U'^n + dt/2 sum k_l w U''^n,
    dt/2 sum k_l w)``; the scalar multiplies ``U''^{n+1}`` on the left side.
    """
    kappa_l, k_l = p.coefficients(dt)
    w = p.weight
    ksum = float(k_l.sum()) * w
    rhs = w * (kappa_l @ state.phi) + 2.0 * ksum * np.asarray(udot_n) + 0.5 * dt * ksum * np.asarray(uddot_n)
    return rhs, 0.5 * dt * ksum


def write_mode_energies(state: FractionalState, p: FractionalParams, path: str | Path) -> None:
    """Diagnostic dump of ``l, theta_l, |phi_l|^2`` per quadrature node."""
    th = p.theta_nodes
    norms = np.einsum("ij,ij->i", state.phi, state.phi)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["l", "theta", "phi_norm2"])
        for ell in range(p.L + 1):
            w.writerow([ell, f"{th[ell]:.17g}", f"{norms[ell]:.17g}"])
