"""Named experiments: build the model from a config, run it, write artifacts."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig, dumps_config
from .embedding import d_scaling_probe, embedding_for_grid, write_table_csv
from .energy import (
    EnergyOptions,
    EnergyRecord,
    ThresholdReport,
    energy,
    fit_decay_rate,
    initial_functional,
    threshold_check,
    write_energy_csv,
)
from .errors import NotApplicable
from .fractional import init_fractional
from .grid import Grid, build_grid
from .memory import init_memory
from .newmark import Model, RunResult, SimState, initial_state, run
from .plate import PlateSystem, assemble_plate, solve_static, write_field_csv
from .sbp import Sbp1D, Sbp2D, build_operators

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_DECAY_BLOWUP = 4
EXIT_SBP_DEFECT = 5

SBP_TOL = 1e-14
MONOTONE_RTOL = 1e-8


@dataclass
class Setup:
    grid: Grid
    ops1: Sbp1D
    ops: Sbp2D
    sys: PlateSystem
    u0: np.ndarray
    u1: np.ndarray


def build_setup(cfg: RunConfig) -> Setup:
    grid = build_grid(cfg.grid)
    ops1, ops = build_operators(grid)
    sys = assemble_plate(ops, grid, cfg.grid.sigma, cfg.plate.lambda_coef)
    x, _ = grid.mesh()
    u0 = solve_static(sys, cfg.plate.load_amplitude * np.sin(x))
    u1 = cfg.plate.velocity_amplitude * np.sin(x)
    return Setup(grid, ops1, ops, sys, u0, u1)


def make_model(cfg: RunConfig, setup: Setup, p: float | None = None) -> Model:
    src = cfg.source if p is None else type(cfg.source)(p, cfg.source.eq_tol, cfg.source.enabled)
    return Model(
        sys=setup.sys,
        frac=cfg.frac,
        mem=cfg.mem,
        source=src,
        stepper=cfg.stepper,
        lambda_in_stiffness=cfg.flags.lambda_in_stiffness,
        c2_sign_variant=cfg.flags.c2_sign_variant,
    )


def energy_options(cfg: RunConfig, p: float) -> EnergyOptions:
    return EnergyOptions(
        p=p,
        source_enabled=cfg.source.enabled,
        consistent_lp_energy=cfg.flags.consistent_lp_energy,
        weighted_memory_energy=cfg.flags.weighted_memory_energy,
        weighted_energy=cfg.flags.weighted_energy,
    )


def initial_energy(cfg: RunConfig, setup: Setup | None = None, p: float | None = None) -> EnergyRecord:
    """Energy of the initial state (static deflection, prescribed history, rest)."""
    setup = setup or build_setup(cfg)
    p = cfg.source.p if p is None else p
    model = make_model(cfg, setup, p)
    state = initial_state(model, setup.u0, setup.u1)
    phi = init_fractional(cfg.frac, state.U.size)
    mu = init_memory(cfg.mem, state.U)
    return energy(state, phi, mu, setup.sys, cfg.frac, cfg.mem, energy_options(cfg, p))


def threshold_reports(cfg: RunConfig, setup: Setup | None = None) -> list[ThresholdReport]:
    setup = setup or build_setup(cfg)
    est = embedding_for_grid(cfg.grid, cfg.plate.lambda_coef)
    out = []
    for p in cfg.p_values:
        rec = initial_energy(cfg, setup, p)
        out.append(threshold_check(rec.E, est.ce(p), p, cfg.plate.lambda_coef, initial_functional(rec, p)))
    return out


def emit_field_snapshot(state: SimState, grid: Grid, path: str | Path) -> None:
    if not np.all(np.isfinite(state.U)):
        raise ValueError("cannot write a non-finite field")
    write_field_csv(grid, state.U, path)


@dataclass
class DynamicsOutcome:
    p: float
    result: RunResult = field(repr=False)
    threshold: ThresholdReport | None
    threshold_note: str
    fit: object | None
    fit_note: str
    increases: int
    max_increase: float

    @property
    def records(self) -> list[EnergyRecord]:
        return self.result.records


def run_dynamics(cfg: RunConfig, out_dir: Path) -> DynamicsOutcome:
    """Single time integration at ``cfg.source.p``; writes energy and fields."""
    out_dir.mkdir(parents=True, exist_ok=True)
    setup = build_setup(cfg)
    p = cfg.source.p
    model = make_model(cfg, setup)
    opts = energy_options(cfg, p)
    cfg.mem.check_decay_bounds()
    cfg.mem.check_relaxation(cfg.plate.lambda_coef)

    def record(state, phi, mu, iters):
        return energy(state, phi, mu, setup.sys, cfg.frac, cfg.mem, opts, iters)

    state0 = initial_state(model, setup.u0, setup.u1)
    emit_field_snapshot(state0, setup.grid, out_dir / "initial_field.csv")
    res = run(model, setup.u0, cfg.T, record, cfg.record_every, u1=setup.u1)
    write_energy_csv(res.records, out_dir / "energy.csv")
    if res.state is not None and np.all(np.isfinite(res.state.U)):
        emit_field_snapshot(res.state, setup.grid, out_dir / "final_field.csv")

    E = np.array([r.E for r in res.records])
    t = np.array([r.t for r in res.records])
    E0 = E[0]
    rec0 = res.records[0]
    threshold, tnote = None, ""
    try:
        est = embedding_for_grid(cfg.grid, cfg.plate.lambda_coef)
        threshold = threshold_check(E0, est.ce(p), p, cfg.plate.lambda_coef, initial_functional(rec0, p))
    except NotApplicable as exc:
        tnote = str(exc)
    fit, fnote = None, ""
    if E.size >= 2:
        try:
            fit = fit_decay_rate(t, E, cfg.fit_start_fraction)
        except NotApplicable as exc:
            fnote = str(exc)
    else:
        fnote = "fewer than two energy samples"
    dE = np.diff(E)
    tol = MONOTONE_RTOL * abs(E0)
    inc = int(np.count_nonzero(dE > tol))
    return DynamicsOutcome(p, res, threshold, tnote, fit, fnote, inc, float(dE.max()) if dE.size else 0.0)


def _fmt(x) -> str:
    return "n/a" if x is None else (f"{x:.17g}" if isinstance(x, float) else str(x))


def dynamics_summary(cfg: RunConfig, o: DynamicsOutcome) -> list[str]:
    r = o.result
    lines = [
        f"experiment = {cfg.experiment}",
        f"p = {o.p:g}",
        f"steps = {r.steps}",
        f"E0 = {_fmt(o.records[0].E)}",
        f"E_final = {_fmt(o.records[-1].E)}",
        f"blew_up = {str(r.blew_up).lower()}",
        f"blowup_time = {_fmt(r.blowup_time)}",
        f"max_fp_iters = {r.max_fp_iters}",
        f"fp_nonconverged_steps = {r.nonconverged_steps}",
        f"energy_increases_over_tol = {o.increases}",
        f"max_energy_increment = {_fmt(o.max_increase)}",
    ]
    if o.threshold is not None:
        th = o.threshold
        lines += [
            f"Ce = {_fmt(th.Ce)}",
            f"threshold_lhs = {_fmt(th.lhs)}",
            f"threshold_rhs = {_fmt(th.rhs)}",
            f"I0 = {_fmt(th.I0)}",
            f"satisfied = {str(th.satisfied).lower()}",
            f"# {th.note}",
        ]
    else:
        lines += ["satisfied = n/a", f"# threshold: {o.threshold_note}"]
    if o.fit is not None:
        lines += [
            f"zeta_hat = {_fmt(o.fit.zeta_hat)}",
            f"theta_hat = {_fmt(o.fit.theta_hat)}",
            f"r_squared = {_fmt(o.fit.r_squared)}",
            f"fit_window_start = {_fmt(o.fit.window_start)}",
        ]
    else:
        lines += ["zeta_hat = n/a", f"# decay fit: {o.fit_note}"]
    return lines


def _dynamics_job(args: tuple[str, str, bool]) -> tuple[list[str], bool, bool]:
    text, out, echo = args
    from .config import parse_config

    cfg = parse_config(text)
    o = run_dynamics(cfg, Path(out))
    lines = dynamics_summary(cfg, o)
    (Path(out) / "summary.txt").write_text("\n".join(lines) + "\n")
    if echo:
        (Path(out) / "config.resolved").write_text(text)
    return lines, o.result.blew_up, cfg.experiment == "decay"


def worker_count(jobs: int) -> int:
    env = os.environ.get("PLATE_THREADS")
    cap = int(env) if env and env.strip().isdigit() and int(env) > 0 else (os.cpu_count() or 1)
    return max(1, min(cap, jobs))


def p_label(p: float) -> str:
    return f"p{p:g}"


def run_experiment(cfg: RunConfig, out_dir: str | Path | None = None) -> int:
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(dumps_config(cfg))
    exp = cfg.experiment
    lines: list[str] = []
    code = EXIT_OK

    if exp in ("decay", "blowup"):
        if len(cfg.p_values) == 1:
            lines, blew, is_decay = _dynamics_job((dumps_config(cfg), str(out), False))
            code = EXIT_DECAY_BLOWUP if (blew and is_decay) else EXIT_OK
            return code
        jobs = [(dumps_config(cfg.with_p(p)), str(out / p_label(p)), True) for p in cfg.p_values]
        n = worker_count(len(jobs))
        if n == 1:
            results = [_dynamics_job(j) for j in jobs]
        else:
            with ProcessPoolExecutor(max_workers=n) as pool:
                results = list(pool.map(_dynamics_job, jobs))
        lines = [f"experiment = {exp}", f"runs = {', '.join(p_label(p) for p in cfg.p_values)}"]
        for p, (sub, blew, is_decay) in zip(cfg.p_values, results):
            lines.append(f"[{p_label(p)}]")
            lines += sub
            if blew and is_decay:
                code = EXIT_DECAY_BLOWUP
    elif exp == "threshold-table":
        reps = threshold_reports(cfg)
        write_table_csv(reps, out / "table.csv")
        lines = [f"experiment = {exp}", f"# {reps[0].note}" if reps else "#"]
        for r in reps:
            lines.append(
                f"p = {r.p:g}: Ce = {r.Ce:.17g}, E0 = {r.E0:.17g}, lhs = {r.lhs:.17g}, "
                f"rhs = {r.rhs:.17g}, I0 = {r.I0:.17g}, satisfied = {str(r.satisfied).lower()}"
            )
    elif exp == "static-solve":
        setup = build_setup(cfg)
        write_field_csv(setup.grid, setup.u0, out / "static_field.csv")
        x, y = setup.grid.mesh()
        k = int(np.argmax(setup.u0))
        sym = float(np.max(np.abs(setup.u0 - setup.grid.reflect_y(setup.u0))))
        lines = [
            f"experiment = {exp}",
            f"max_u = {setup.u0[k]:.17g}",
            f"argmax_x = {x[k]:.17g}",
            f"argmax_y = {y[k]:.17g}",
            f"y_symmetry_defect = {sym:.3e}",
        ]
    elif exp == "sbp-verify":
        setup = build_setup(cfg)
        defect = setup.ops1.sbp_defect()
        lines = [f"experiment = {exp}", f"sbp_defect = {defect:.3e}", f"tolerance = {SBP_TOL:.0e}"]
        lines += operator_accuracy_table(setup)
        print("\n".join(lines))
        if not defect <= SBP_TOL:
            code = EXIT_SBP_DEFECT
    elif exp == "d-scaling":
        rows, ratio = d_scaling_probe(cfg.grid, cfg.d_values, cfg.r, cfg.plate.lambda_coef)
        with open(out / "d_scaling.csv", "w") as fh:
            fh.write("d,Ce,compensated\n")
            for row in rows:
                fh.write(f"{row.d:.17g},{row.Ce:.17g},{row.compensated:.17g}\n")
        lines = [f"experiment = {exp}", f"r = {cfg.r:g}", f"compensated_max_over_min = {ratio:.17g}"]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    return code


def operator_accuracy_table(setup: Setup) -> list[str]:
    """Max nodal error of the second derivatives on smooth test fields."""
    g = setup.grid
    x, y = g.mesh()
    ops = setup.ops
    cases = [
        ("Dxx sin(x)", np.sin(x), -np.sin(x), ops.Dxx),
        ("Dyy y^2", y**2, 2.0 + 0 * y, ops.Dyy),
        ("Dyy y^3", y**3, 6.0 * y, ops.Dyy),
        ("Dxy sin(x) y^2", np.sin(x) * y**2, 2.0 * np.cos(x) * y, ops.Dxy),
    ]
    out = ["operator, max_abs_error"]
    for name, u, exact, D in cases:
        out.append(f"{name}, {float(np.max(np.abs(D @ u - exact))):.3e}")
    return out
