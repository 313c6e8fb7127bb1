"""Viscoelastic memory through the relative history ``mu(t, s) = u(t) - u(t - s)``.

The history variable satisfies the transport law ``mu_t + mu_s = u_t`` with
``mu(t, 0) = 0``.  It is discretized on ``s_m = m ds`` (``m = 0..M``) with a
first-order upwind finite-volume update, and the memory force is evaluated
with the left-endpoint rule ``sum_m g(s_m) K mu_m ds``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

import numpy as np

from .errors import CflViolation, ConfigError
from .plate import PlateSystem


@dataclass(frozen=True)
class ExponentialKernel:
    """``g(s) = amplitude * exp(-rate * s)``."""

    amplitude: float
    rate: float

    def __call__(self, s):
        return self.amplitude * np.exp(-self.rate * np.asarray(s, dtype=float))

    def integral(self) -> float:
        return self.amplitude / self.rate if self.rate > 0 else math.inf


HISTORY_KINDS = ("scaled-initial", "uniform")


@dataclass(frozen=True)
class ExponentialHistory:
    """Past displacement ``u(x, y, -s) = exp(-rate * s) * shape(x, y)``.

    ``kind="scaled-initial"`` uses the initial displacement as the shape, so the
    history joins ``u0`` continuously at ``s = 0``.  ``kind="uniform"`` uses the
    constant field 1.  A past of the form ``exp(c t)`` for ``t < 0`` is ``rate=c``.
    """

    kind: str
    rate: float

    def __post_init__(self):
        if self.kind not in HISTORY_KINDS:
            raise ConfigError(f"unknown history kind {self.kind!r}; expected one of {HISTORY_KINDS}")

    def __call__(self, s: float, u0: np.ndarray) -> np.ndarray:
        factor = math.exp(-self.rate * s)
        if self.kind == "scaled-initial":
            return factor * u0
        return np.full_like(u0, factor)


History = Union[ExponentialHistory, Callable[[float, np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class MemoryParams:
    S: float
    M: int
    kernel: Callable
    history: History
    c0: float | None = None
    c1: float | None = None

    def validate(self) -> None:
        if not (self.S > 0):
            raise ConfigError(f"S must be positive, got {self.S!r}")
        if int(self.M) != self.M or self.M < 1:
            raise ConfigError(f"M must be a positive integer, got {self.M!r}")
        g = self.g_weights
        if not np.all(np.isfinite(g)) or np.any(g < 0):
            raise ConfigError("memory kernel must be finite and non-negative on the s-grid")

    @property
    def ds(self) -> float:
        return self.S / self.M

    @property
    def s_nodes(self) -> np.ndarray:
        return self.ds * np.arange(self.M + 1)

    @property
    def g_weights(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.kernel(self.s_nodes), dtype=float), (self.M + 1,)).copy()

    @property
    def g_sum(self) -> float:
        """Left-endpoint quadrature ``sum_m g(s_m) ds``."""
        return float(self.g_weights.sum()) * self.ds

    @property
    def active(self) -> bool:
        return bool(np.any(self.g_weights != 0.0))

    def check_cfl(self, dt: float) -> None:
        if dt > self.ds:
            raise CflViolation(f"memory transport needs dt <= ds; got dt={dt!r}, ds={self.ds!r}")

    def check_decay_bounds(self) -> bool:
        """Test ``-c0 g <= g' <= -c1 g`` with forward differences; warn on failure."""
        if self.c0 is None or self.c1 is None:
            return True
        g = self.g_weights
        dg = np.diff(g) / self.ds
        gm = g[:-1]
        ok = bool(np.all(dg >= -self.c0 * gm - 1e-14) and np.all(dg <= -self.c1 * gm + 1e-14))
        if not ok:
            warnings.warn(
                f"memory kernel violates -c0 g <= g' <= -c1 g with c0={self.c0}, c1={self.c1}",
                RuntimeWarning,
                stacklevel=2,
            )
        return ok

    def check_relaxation(self, lambda_coef: float, atol: float = 1e-6) -> bool:
        """Warn when ``int g`` differs from ``1 - lambda`` (the usual relaxation constraint)."""
        total = self.kernel.integral() if hasattr(self.kernel, "integral") else self.g_sum
        target = 1.0 - lambda_coef
        ok = abs(total - target) <= atol
        if not ok:
            warnings.warn(
                f"kernel integral {total:.6g} differs from 1 - lambda = {target:.6g}",
                RuntimeWarning,
                stacklevel=2,
            )
        return ok


@dataclass
class MemoryState:
    mu: np.ndarray = field(repr=False)  # shape (M + 1, n)

    def copy(self) -> "MemoryState":
        return MemoryState(self.mu.copy())


def init_memory(p: MemoryParams, u0: np.ndarray) -> MemoryState:
    u0 = np.asarray(u0, dtype=float)
    mu = np.empty((p.M + 1, u0.size))
    for m, s in enumerate(p.s_nodes):
        mu[m] = u0 - p.history(float(s), u0)
    return MemoryState(mu)


def step_mu(state: MemoryState, vdot_half: np.ndarray, dt: float, p: MemoryParams) -> MemoryState:
    p.check_cfl(dt)
    r = dt / p.ds
    mu = (1.0 - r) * state.mu
    mu[1:] += r * state.mu[:-1]
    mu += dt * np.asarray(vdot_half)[None, :]
    return MemoryState(mu)


def memory_force(state: MemoryState, sys: PlateSystem, p: MemoryParams) -> np.ndarray:
    return sys.K @ (p.ds * (p.g_weights @ state.mu))


def c2_contribution(
    state: MemoryState,
    udot_n: np.ndarray,
    uddot_n: np.ndarray,
    dt: float,
    p: MemoryParams,
    sys: PlateSystem,
    sign_variant: bool = False,
    h_scaled: bool = False,
) -> tuple[np.ndarray, float]:
    """Explicit memory force at the new level and the implicit stiffness scale.

    The explicit part is ``(1 - dt/ds) sum g K mu_m ds + sum g K mu_{m-1} dt
    + dt/4 sum g ds K U''^n + c sum g ds K U'^n`` with ``c = -1`` by default, so
    that moving it to the right-hand side yields the ``+ sum g K U'^n ds``
    term of the stepping formula.  ``sign_variant`` uses ``c = +1``.
    The scalar returned multiplies ``K U''^{n+1}`` on the left side.
    With ``h_scaled`` the vector is returned premultiplied by ``H``, computed
    as ``G acc`` so that no rounded ``H K`` product enters.
    """
    g = p.g_weights
    ds = p.ds
    gsum = float(g.sum()) * ds
    c = 1.0 if sign_variant else -1.0
    acc = (1.0 - dt / ds) * ds * (g @ state.mu)
    acc += dt * (g[1:] @ state.mu[:-1])
    acc += gsum * (0.25 * dt * np.asarray(uddot_n) + c * np.asarray(udot_n))
    force = sys.G @ acc if h_scaled else sys.K @ acc
    return force, 0.25 * dt * gsum


def write_history_slices(state: MemoryState, p: MemoryParams, sys: PlateSystem, path: str | Path) -> None:
    """Dump ``m, s_m, ||mu_m||_H`` per history node."""
    w = sys.weights
    norms = np.sqrt(np.einsum("mi,i,mi->m", state.mu, w, state.mu))
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["m", "s", "mu_norm_H"])
        for m, s in enumerate(p.s_nodes):
            out.writerow([m, f"{s:.17g}", f"{norms[m]:.17g}"])
