"""Average-acceleration Newmark stepping of the damped plate with a nonlinear source.

Each step solves

    (I (1 + c1) + K (c2 + s dt^2/4)) A^{n+1}
        = J(U^{n+1}, U^n) - s K (U^n + dt V^n + dt^2/4 A^n) - F1 - F2

for the new acceleration, where ``F1``/``c1`` and ``F2``/``c2`` are the explicit
parts and implicit scales of the fractional and memory damping, ``J`` is the
discrete gradient of the source and ``s`` is either 1 or the relaxed stiffness
factor lambda.  ``J`` depends on ``U^{n+1}``, so the step is a Picard iteration
around one factorized left-hand side.  The system is assembled multiplied by
the diagonal norm ``H``, with stiffness terms formed as ``G U`` in extended precision: the rounded
product ``H K`` is not exactly symmetric, and on smooth fields that defect is
large enough to break the energy balance at the 1e-8 level.  Afterwards the auxiliary fields are
advanced with the midpoint velocity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, InstabilityDetected
from .fractional import FractionalParams, FractionalState, c1_contribution, init_fractional, step_phi
from .memory import MemoryParams, MemoryState, c2_contribution, init_memory, step_mu
from .plate import PlateSystem, SpdSolver
from .source import SourceParams, source_field

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    gamma_N: float = 0.5
    beta_N: float = 0.25
    fp_tol: float = 1e-10
    fp_max_iter: int = 50
    blowup_guard: float = 1e6

    def validate(self) -> None:
        if not (self.dt > 0):
            raise ConfigError(f"dt must be positive, got {self.dt!r}")
        if self.gamma_N != 0.5 or self.beta_N != 0.25:
            raise ConfigError("only the average-acceleration pair gamma_N=1/2, beta_N=1/4 is supported")
        if not (self.fp_tol > 0):
            raise ConfigError(f"fp_tol must be positive, got {self.fp_tol!r}")
        if int(self.fp_max_iter) != self.fp_max_iter or self.fp_max_iter < 1:
            raise ConfigError(f"fp_max_iter must be a positive integer, got {self.fp_max_iter!r}")
        if not (self.blowup_guard > 0):
            raise ConfigError(f"blowup_guard must be positive, got {self.blowup_guard!r}")


@dataclass(frozen=True)
class Model:
    """Everything a step needs besides the evolving state."""

    sys: PlateSystem
    frac: FractionalParams
    mem: MemoryParams
    source: SourceParams
    stepper: StepperConfig
    lambda_in_stiffness: bool = False
    c2_sign_variant: bool = False

    @property
    def stiffness_scale(self) -> float:
        return self.sys.lambda_coef if self.lambda_in_stiffness else 1.0


@dataclass
class SimState:
    U: np.ndarray
    V: np.ndarray
    A: np.ndarray
    t: float = 0.0
    step_index: int = 0


@dataclass(frozen=True)
class StepReport:
    iterations: int
    residual: float
    converged: bool
    max_abs_u: float


@dataclass
class Lhs:
    """Factorized left-hand side together with its two scalar coefficients."""

    solver: SpdSolver
    identity_scale: float
    stiffness_scale: float


def assemble_lhs(model: Model) -> Lhs:
    dt = model.stepper.dt
    _, k_l = model.frac.coefficients(dt)
    c1 = 0.5 * dt * float(k_l.sum()) * model.frac.weight
    c2 = 0.25 * dt * model.mem.g_sum
    a = 1.0 + c1
    b = c2 + model.stiffness_scale * dt * dt / 4.0
    return Lhs(model.sys.shifted_solver(a, b), a, b)


def initial_state(model: Model, u0: np.ndarray, u1: np.ndarray | None = None) -> SimState:
    """State at t=0 with the acceleration balancing the undamped equation."""
    u0 = np.asarray(u0, dtype=float)
    v0 = np.zeros_like(u0) if u1 is None else np.asarray(u1, dtype=float)
    sys = model.sys
    a0 = source_field(u0, u0, model.source) - model.stiffness_scale * sys.gram_apply(u0) / sys.weights
    return SimState(U=u0.copy(), V=v0.copy(), A=a0)


def step(
    state: SimState,
    phi: FractionalState,
    mu: MemoryState,
    model: Model,
    lhs: Lhs,
) -> tuple[SimState, FractionalState, MemoryState, StepReport]:
    cfg = model.stepper
    dt = cfg.dt
    sys = model.sys
    U, V, A = state.U, state.V, state.A

    w = sys.weights
    f1, _ = c1_contribution(phi, V, A, dt, model.frac)
    f2h, _ = c2_contribution(mu, V, A, dt, model.mem, sys, model.c2_sign_variant, h_scaled=True)
    U_pred = U + dt * V + 0.25 * dt * dt * A
    base = -model.stiffness_scale * sys.gram_apply(U_pred) - w * f1 - f2h

    A_new = None
    change = 0.0
    converged = False
    iters = 0
    U_guess = U_pred
    for iters in range(1, cfg.fp_max_iter + 1):
        rhs = base + w * source_field(U_guess, U, model.source) if model.source.enabled else base
        A_next = lhs.solver.solve(rhs)
        if A_new is None:
            change = np.inf
        else:
            scale = max(np.max(np.abs(A_next)), np.finfo(float).tiny)
            change = float(np.max(np.abs(A_next - A_new)) / scale)
        A_new = A_next
        U_guess = U_pred + 0.25 * dt * dt * A_new
        if not model.source.enabled or change <= cfg.fp_tol:
            converged = True
            if not model.source.enabled:
                change = 0.0
            break

    U_new = U_guess
    V_new = V + 0.5 * dt * (A + A_new)
    if not (np.all(np.isfinite(U_new)) and np.all(np.isfinite(V_new))):
        raise InstabilityDetected(f"non-finite state at step {state.step_index + 1}")
    v_half = 0.5 * (V + V_new)
    phi_new = step_phi(phi, v_half, dt, model.frac)
    mu_new = step_mu(mu, v_half, dt, model.mem)
    new_state = SimState(U_new, V_new, A_new, t=(state.step_index + 1) * dt, step_index=state.step_index + 1)
    report = StepReport(iters, change, converged, float(np.max(np.abs(U_new))) if U_new.size else 0.0)
    return new_state, phi_new, mu_new, report


@dataclass
class RunResult:
    records: list = field(default_factory=list)
    state: SimState | None = None
    phi: FractionalState | None = None
    mu: MemoryState | None = None
    blew_up: bool = False
    blowup_time: float | None = None
    steps: int = 0
    max_fp_iters: int = 0
    nonconverged_steps: int = 0


def run(
    model: Model,
    u0: np.ndarray,
    T: float,
    record: Callable[[SimState, FractionalState, MemoryState, int], object],
    record_every: int = 1,
    u1: np.ndarray | None = None,
    progress: Callable[[SimState], None] | None = None,
) -> RunResult:
    """Integrate from t=0 to ``T`` or until the amplitude guard fires.

    ``record(state, phi, mu, fp_iters)`` is called at t=0, every
    ``record_every`` steps, at the final step and at the step that trips the
    guard; its return values are collected in ``RunResult.records``.
    """
    model.stepper.validate()
    model.mem.check_cfl(model.stepper.dt)
    if record_every < 1:
        raise ConfigError(f"record_every must be >= 1, got {record_every!r}")
    if T < 0:
        raise ConfigError(f"T must be non-negative, got {T!r}")
    n_steps = int(round(T / model.stepper.dt))
    lhs = assemble_lhs(model)
    state = initial_state(model, u0, u1)
    phi = init_fractional(model.frac, state.U.size)
    mu = init_memory(model.mem, state.U)
    out = RunResult()
    out.records.append(record(state, phi, mu, 0))
    guard = model.stepper.blowup_guard
    for k in range(1, n_steps + 1):
        state, phi, mu, rep = step(state, phi, mu, model, lhs)
        out.max_fp_iters = max(out.max_fp_iters, rep.iterations)
        if not rep.converged:
            out.nonconverged_steps += 1
        if rep.max_abs_u > guard:
            out.blew_up = True
            out.blowup_time = state.t
            out.records.append(record(state, phi, mu, rep.iterations))
            log.info("amplitude guard fired at t=%.6g", state.t)
            break
        if k % record_every == 0 or k == n_steps:
            out.records.append(record(state, phi, mu, rep.iterations))
        if progress is not None:
            progress(state)
    out.state, out.phi, out.mu = state, phi, mu
    out.steps = state.step_index
    if out.nonconverged_steps:
        log.warning("%d steps hit the fixed-point iteration limit", out.nonconverged_steps)
    return out
