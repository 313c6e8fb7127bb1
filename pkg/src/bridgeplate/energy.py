"""Discrete energy, its decomposition, the global-existence threshold, and decay fits."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import NotApplicable
from .fractional import FractionalParams, FractionalState
from .memory import MemoryParams, MemoryState
from .newmark import SimState
from .plate import PlateSystem


@dataclass(frozen=True)
class EnergyOptions:
    """Quadrature choices for the energy.

    The defaults follow the plain nodal sums scaled by ``dx dy``.
    ``consistent_lp_energy`` replaces ``(U^T U)^{p/2} dx dy`` by the weighted
    ``sum_i w_i |U_i|^p``.  ``weighted_memory_energy`` evaluates the memory
    bilinear form in the H inner product.  ``weighted_energy`` switches every
    term to the norm-weighted form the time stepper actually dissipates: kinetic
    and fractional parts in the H inner product, the elastic part through the
    Gram form, and the fractional factor without the extra one half.  It implies
    the other two options.
    """

    p: float
    source_enabled: bool = True
    consistent_lp_energy: bool = False
    weighted_memory_energy: bool = False
    weighted_energy: bool = False


@dataclass(frozen=True)
class EnergyRecord:
    t: float
    E: float
    E_kin: float
    E_elastic: float
    E_frac: float
    E_source: float
    E_mem: float
    max_abs_u: float
    fp_iters: int


CSV_COLUMNS = tuple(f.name for f in fields(EnergyRecord))


def source_energy(U: np.ndarray, sys: PlateSystem, opts: EnergyOptions) -> float:
    if not opts.source_enabled:
        return 0.0
    p = opts.p
    if opts.consistent_lp_energy or opts.weighted_energy:
        return -float(sys.weights @ np.abs(U) ** p) / p
    cell = sys.grid.dx * sys.grid.dy
    return -float(U @ U) ** (p / 2.0) * cell / p


def memory_energy(mu: MemoryState, sys: PlateSystem, mem: MemoryParams, weighted: bool) -> float:
    g = mem.g_weights
    if not np.any(g):
        return 0.0
    ops = sys.ops
    M = mu.mu.T  # (n, M+1)
    a = ops.Dxx @ M
    b = ops.Dyy @ M
    c = ops.Dxy @ M
    sig = sys.sigma
    dens = a * a + b * b + 2.0 * sig * a * b + 2.0 * (1.0 - sig) * c * c
    per_m = sys.weights @ dens if weighted else dens.sum(axis=0)
    return 0.5 * float(g @ per_m) * mem.ds


def energy(
    state: SimState,
    phi: FractionalState,
    mu: MemoryState,
    sys: PlateSystem,
    frac: FractionalParams,
    mem: MemoryParams,
    opts: EnergyOptions,
    fp_iters: int = 0,
) -> EnergyRecord:
    U, V = state.U, state.V
    if opts.weighted_energy:
        w = sys.weights
        e_kin = 0.5 * float(V @ (w * V))
        e_el = 0.5 * sys.lambda_coef * float(sys.energy_norm2(U))
        e_frac = frac.kappa * frac.weight * float(np.einsum("ij,j,ij->", phi.phi, w, phi.phi))
    else:
        cell = sys.grid.dx * sys.grid.dy
        e_kin = 0.5 * float(V @ V) * cell
        e_el = 0.5 * sys.lambda_coef * float(U @ (sys.K @ U)) * cell
        e_frac = 0.5 * frac.kappa * frac.weight * float(np.einsum("ij,ij->", phi.phi, phi.phi)) * cell
    e_src = source_energy(U, sys, opts)
    e_mem = memory_energy(mu, sys, mem, opts.weighted_memory_energy or opts.weighted_energy)
    total = e_kin + e_el + e_frac + e_src + e_mem
    return EnergyRecord(
        t=state.t,
        E=total,
        E_kin=e_kin,
        E_elastic=e_el,
        E_frac=e_frac,
        E_source=e_src,
        E_mem=e_mem,
        max_abs_u=float(np.max(np.abs(U))) if U.size else 0.0,
        fp_iters=int(fp_iters),
    )


def write_energy_csv(records: Iterable[EnergyRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            row = asdict(r)
            w.writerow([f"{row[k]:.17g}" if k != "fp_iters" else str(row[k]) for k in CSV_COLUMNS])


def read_energy_csv(path: str | Path) -> list[EnergyRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        EnergyRecord(**{k: (int(r[k]) if k == "fp_iters" else float(r[k])) for k in CSV_COLUMNS})
        for r in rows
    ]


def initial_functional(rec: EnergyRecord, p: float) -> float:
    """Discrete analogue of ``I(0)``: plate, damping and memory energy against the source."""
    return 2.0 * (rec.E_elastic + rec.E_frac + rec.E_mem) + p * rec.E_source


@dataclass(frozen=True)
class ThresholdReport:
    E0: float
    Ce: float
    p: float
    lhs: float
    rhs: float
    satisfied: bool
    I0: float
    note: str = "Ce is a discrete estimate of the embedding constant, not a rigorous upper bound"


def threshold_check(E0: float, Ce: float, p: float, lambda_coef: float, I0: float) -> ThresholdReport:
    if E0 < 0:
        raise NotApplicable(f"initial energy {E0:.6g} is negative; the small-data condition does not apply")
    lhs = Ce * (2.0 * p / (p - 2.0) * E0) ** ((p - 2.0) / 2.0)
    rhs = lambda_coef ** (p / 2.0)
    return ThresholdReport(E0=E0, Ce=Ce, p=p, lhs=lhs, rhs=rhs, satisfied=bool(lhs < rhs and I0 > 0), I0=I0)


@dataclass(frozen=True)
class DecayFit:
    theta_hat: float
    zeta_hat: float
    r_squared: float
    window_start: float


def fit_decay_rate(t: Sequence[float], E: Sequence[float], start_fraction: float = 0.4) -> DecayFit:
    """Fit ``log E = log(theta E(0)) - zeta t`` over the trailing samples.

    ``start_fraction`` is the share of samples discarded at the start, so the
    default window is the last 60% of the series.
    """
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    if t.shape != E.shape or t.size < 2:
        raise ValueError("need matching t and E with at least two samples")
    i0 = min(int(math.floor(start_fraction * t.size)), t.size - 2)
    tw, Ew = t[i0:], E[i0:]
    if np.any(Ew <= 0) or not np.all(np.isfinite(Ew)):
        raise NotApplicable("energy is not positive over the fit window")
    y = np.log(Ew)
    tm = tw.mean()
    ym = y.mean()
    dt = tw - tm
    slope = float(dt @ (y - ym) / (dt @ dt))
    intercept = ym - slope * tm
    resid = y - (intercept + slope * tw)
    ss_tot = float((y - ym) @ (y - ym))
    ss_res = float(resid @ resid)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    theta = math.exp(intercept) / E[0] if E[0] > 0 else math.nan
    return DecayFit(theta_hat=theta, zeta_hat=-slope, r_squared=r2, window_start=float(tw[0]))
