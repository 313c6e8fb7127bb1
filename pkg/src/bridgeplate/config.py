"""Run configuration: INI parsing, validation, presets, and the resolved echo.

A configuration file has flat sections mirroring the model pieces::

    [run]
    preset = decay-desk-p4
    T = 20

    [grid]
    J = 40

Numeric values accept plain arithmetic with ``pi`` (``d = pi/50``).  Keys not
listed in ``SCHEMA`` are rejected.  ``dumps_config`` writes every effective
value with full precision so the output parses back to an identical config.
"""

from __future__ import annotations

import ast
import configparser
import math
import operator
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError
from .fractional import FractionalParams
from .grid import Y_LAYOUTS, GridConfig
from .memory import HISTORY_KINDS, ExponentialHistory, ExponentialKernel, MemoryParams
from .newmark import StepperConfig
from .source import SourceParams

EXPERIMENTS = ("decay", "blowup", "threshold-table", "static-solve", "sbp-verify", "d-scaling")
FLAG_NAMES = (
    "paper_literal_dtheta",
    "paper_literal_phi_update",
    "lambda_in_stiffness",
    "consistent_lp_energy",
    "weighted_memory_energy",
    "weighted_energy",
    "c2_sign_variant",
)

# ---------------------------------------------------------------- value parsing

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_NAMES = {"pi": math.pi, "e": math.e}


def _eval_node(node):
    if isinstance(node, ast.Expression):
        return _eval_node(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return node.value
    if isinstance(node, ast.Name) and node.id in _NAMES:
        return _NAMES[node.id]
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_node(node.left), _eval_node(node.right))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
        return _UNOPS[type(node.op)](_eval_node(node.operand))
    raise ValueError("unsupported expression")


def parse_number(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        pass
    try:
        val = _eval_node(ast.parse(text.strip(), mode="eval"))
    except (SyntaxError, ValueError, ZeroDivisionError, OverflowError) as exc:
        raise ConfigError(f"cannot read {text!r} as a number") from exc
    return float(val)


def parse_int(text: str) -> int:
    val = parse_number(text)
    if val != int(val):
        raise ConfigError(f"expected an integer, got {text!r}")
    return int(val)


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def parse_list(text: str) -> tuple[float, ...]:
    parts = [p for p in text.replace(",", " ").split() if p]
    return tuple(parse_number(p) for p in parts)


def parse_str(text: str) -> str:
    return text.strip()


def parse_opt_number(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none") else parse_number(text)


# ---------------------------------------------------------------- schema

# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any]]] = {
    "run": {
        "preset": (parse_str, ""),
        "experiment": (parse_str, "decay"),
        "T": (parse_number, 1000.0),
        "record_every": (parse_int, 1),
        "output_dir": (parse_str, "out"),
        "p_sweep": (parse_list, ()),
        "fit_start_fraction": (parse_number, 0.4),
    },
    "grid": {
        "J": (parse_int, 60),
        "K": (parse_int, 20),
        "d": (parse_number, math.pi / 50),
        "sigma": (parse_number, 0.1),
        "y_layout": (parse_str, "cell-centered"),
    },
    "plate": {
        "lambda": (parse_number, 0.5),
        "load_amplitude": (parse_number, 0.1),
        "velocity_amplitude": (parse_number, 0.0),
    },
    "fractional": {
        "alpha": (parse_number, 0.95),
        "beta": (parse_number, 2.5),
        "a1": (parse_number, 1.0),
        "R": (parse_number, 10 * math.pi),
        "L": (parse_int, 100),
    },
    "memory": {
        "S": (parse_number, 80.0),
        "M": (parse_int, 160),
        "kernel_amplitude": (parse_number, 1e-4),
        "kernel_rate": (parse_number, 2.0),
        "history_kind": (parse_str, "scaled-initial"),
        "history_rate": (parse_number, 2.0),
        "c0": (parse_opt_number, None),
        "c1": (parse_opt_number, None),
    },
    "source": {
        "p": (parse_number, 4.0),
        "eq_tol": (parse_number, 1e-9),
        "enabled": (parse_bool, True),
    },
    "stepper": {
        "dt": (parse_number, 1e-3),
        "fp_tol": (parse_number, 1e-10),
        "fp_max_iter": (parse_int, 50),
        "blowup_guard": (parse_number, 1e6),
    },
    "flags": {name: (parse_bool, False) for name in FLAG_NAMES},
    "dscaling": {
        "d_values": (parse_list, (math.pi / 25, math.pi / 50, math.pi / 100)),
        "r": (parse_number, 2.0),
    },
}


# ---------------------------------------------------------------- config types


@dataclass(frozen=True)
class PlateSpec:
    lambda_coef: float
    load_amplitude: float
    velocity_amplitude: float = 0.0

    def validate(self) -> None:
        if not (0.0 < self.lambda_coef <= 1.0):
            raise ConfigError(f"lambda ∉ (0, 1]: lambda={self.lambda_coef!r}")


@dataclass(frozen=True)
class Flags:
    paper_literal_dtheta: bool = False
    paper_literal_phi_update: bool = False
    lambda_in_stiffness: bool = False
    consistent_lp_energy: bool = False
    weighted_memory_energy: bool = False
    weighted_energy: bool = False
    c2_sign_variant: bool = False


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    grid: GridConfig
    plate: PlateSpec
    frac: FractionalParams
    mem: MemoryParams
    source: SourceParams
    stepper: StepperConfig
    T: float
    record_every: int
    output_dir: str
    flags: Flags
    p_sweep: tuple[float, ...] = ()
    fit_start_fraction: float = 0.4
    d_values: tuple[float, ...] = (math.pi / 25, math.pi / 50, math.pi / 100)
    r: float = 2.0
    preset: str = field(default="", compare=False)
    values: dict = field(default_factory=dict, repr=False, compare=False)

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.record_every < 1:
            raise ConfigError(f"record_every must be >= 1, got {self.record_every!r}")
        if self.T < 0:
            raise ConfigError(f"T must be non-negative, got {self.T!r}")
        if not (0.0 <= self.fit_start_fraction < 1.0):
            raise ConfigError(f"fit_start_fraction ∉ [0, 1): {self.fit_start_fraction!r}")
        self.grid.validate()
        self.plate.validate()
        self.frac.validate()
        self.mem.validate()
        self.stepper.validate()
        if self.source.enabled or self.experiment in ("decay", "blowup", "threshold-table"):
            for p in self.p_values:
                replace(self.source, p=p).validate()
        if self.experiment in ("decay", "blowup"):
            self.mem.check_cfl(self.stepper.dt)
        if any(not (0.0 < d) for d in self.d_values):
            raise ConfigError("d_values must be positive")

    @property
    def p_values(self) -> tuple[float, ...]:
        return tuple(self.p_sweep) if self.p_sweep else (self.source.p,)

    def with_p(self, p: float) -> "RunConfig":
        vals = {s: dict(kv) for s, kv in self.values.items()}
        vals["source"]["p"] = float(p)
        vals["run"]["p_sweep"] = ()
        return build_config(vals)


# ---------------------------------------------------------------- presets

def _full_decay(p: float) -> dict:
    return {
        "run": {"experiment": "decay", "T": 1000.0, "record_every": 100},
        "grid": {"J": 60, "K": 20, "d": math.pi / 50, "sigma": 0.1, "y_layout": "cell-centered"},
        "plate": {"lambda": 0.5, "load_amplitude": 0.1, "velocity_amplitude": 0.0},
        "fractional": {"alpha": 0.95, "beta": 2.5, "a1": 1.0, "R": 10 * math.pi, "L": 100},
        "memory": {"S": 80.0, "M": 160, "kernel_amplitude": 1e-4, "kernel_rate": 2.0,
                   "history_kind": "scaled-initial", "history_rate": 2.0},
        "source": {"p": float(p)},
        "stepper": {"dt": 1e-3},
        "flags": {"consistent_lp_energy": True, "lambda_in_stiffness": True, "c2_sign_variant": True,
                  "weighted_energy": True},
    }


def _full_blowup() -> dict:
    return {
        "run": {"experiment": "blowup", "T": 1800.0, "record_every": 1},
        "grid": {"J": 60, "K": 20, "d": math.pi / 50, "sigma": 0.1, "y_layout": "cell-centered"},
        "plate": {"lambda": 0.8, "load_amplitude": 5.0, "velocity_amplitude": 0.0},
        "fractional": {"alpha": 0.5, "beta": 3.5, "a1": 1.0, "R": 10 * math.pi, "L": 100},
        "memory": {"S": 80.0, "M": 160, "kernel_amplitude": 1e-3, "kernel_rate": 5.0,
                   "history_kind": "scaled-initial", "history_rate": 5.0},
        "source": {"p": 2.1},
        "stepper": {"dt": 1e-3},
        "flags": {"consistent_lp_energy": True, "lambda_in_stiffness": True, "c2_sign_variant": True,
                  "weighted_energy": True},
    }


def _desk(vals: dict, T: float, record_every: int) -> dict:
    vals["grid"].update(J=30, K=10)
    vals["run"].update(T=T, record_every=record_every)
    return vals


def _p_label(p: float) -> str:
    return f"{p:g}"


PAPER_P = (2.5, 3.0, 4.0, 5.0)


def _preset_table() -> dict[str, Callable[[], dict]]:
    table: dict[str, Callable[[], dict]] = {}
    for p in PAPER_P:
        table[f"decay-paper-p{_p_label(p)}"] = lambda p=p: _full_decay(p)
        table[f"decay-desk-p{_p_label(p)}"] = lambda p=p: _desk(_full_decay(p), 50.0, 10)

    def sweep(base: dict) -> dict:
        base["run"]["p_sweep"] = PAPER_P
        return base

    table["decay-paper"] = lambda: sweep(_full_decay(4.0))
    table["decay-desk"] = lambda: sweep(_desk(_full_decay(4.0), 50.0, 10))
    table["blowup-paper"] = _full_blowup
    table["blowup-desk"] = lambda: _desk(_full_blowup(), 100.0, 1)

    def table1() -> dict:
        v = sweep(_full_decay(4.0))
        v["run"]["experiment"] = "threshold-table"
        # Table values were produced with the displayed quadrature.
        v["flags"]["weighted_energy"] = False
        return v

    table["threshold-table"] = table1

    def simple(exp: str) -> Callable[[], dict]:
        def make() -> dict:
            v = _full_decay(4.0)
            v["run"]["experiment"] = exp
            return v
        return make

    for exp in ("static-solve", "sbp-verify", "d-scaling"):
        table[exp] = simple(exp)
    return table


PRESETS = _preset_table()


def preset_names() -> list[str]:
    return sorted(PRESETS)


def preset_values(name: str) -> dict:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}") from None


# ---------------------------------------------------------------- assembly


def _defaults() -> dict:
    return {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}


def _merge(base: dict, over: dict) -> dict:
    for sec, kv in over.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for k, v in kv.items():
            if k not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {k!r} in section [{sec}]")
            base[sec][k] = v
    return base


def build_config(values: dict) -> RunConfig:
    """Turn a fully merged ``{section: {key: value}}`` mapping into a validated config."""
    v = values
    fl = Flags(**{k: bool(v["flags"][k]) for k in FLAG_NAMES})
    r, g, pl, fr, me, so, st = (v[s] for s in ("run", "grid", "plate", "fractional", "memory", "source", "stepper"))
    if g["y_layout"] not in Y_LAYOUTS:
        raise ConfigError(f"y_layout must be one of {Y_LAYOUTS}, got {g['y_layout']!r}")
    if me["history_kind"] not in HISTORY_KINDS:
        raise ConfigError(f"history_kind must be one of {HISTORY_KINDS}, got {me['history_kind']!r}")
    cfg = RunConfig(
        experiment=r["experiment"],
        grid=GridConfig(int(g["J"]), int(g["K"]), float(g["d"]), float(g["sigma"]), g["y_layout"]),
        plate=PlateSpec(float(pl["lambda"]), float(pl["load_amplitude"]), float(pl["velocity_amplitude"])),
        frac=FractionalParams(
            float(fr["alpha"]), float(fr["beta"]), float(fr["a1"]), float(fr["R"]), int(fr["L"]),
            paper_literal_dtheta=fl.paper_literal_dtheta,
            paper_literal_phi_update=fl.paper_literal_phi_update,
        ),
        mem=MemoryParams(
            float(me["S"]), int(me["M"]),
            ExponentialKernel(float(me["kernel_amplitude"]), float(me["kernel_rate"])),
            ExponentialHistory(me["history_kind"], float(me["history_rate"])),
            c0=me["c0"], c1=me["c1"],
        ),
        source=SourceParams(float(so["p"]), float(so["eq_tol"]), bool(so["enabled"])),
        stepper=StepperConfig(float(st["dt"]), fp_tol=float(st["fp_tol"]), fp_max_iter=int(st["fp_max_iter"]),
                              blowup_guard=float(st["blowup_guard"])),
        T=float(r["T"]),
        record_every=int(r["record_every"]),
        output_dir=str(r["output_dir"]),
        flags=fl,
        p_sweep=tuple(float(x) for x in r["p_sweep"]),
        fit_start_fraction=float(r["fit_start_fraction"]),
        d_values=tuple(float(x) for x in v["dscaling"]["d_values"]),
        r=float(v["dscaling"]["r"]),
        preset=r["preset"],
        values={s: dict(kv) for s, kv in v.items()},
    )
    cfg.validate()
    return cfg


def _read_ini(text: str) -> dict:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive (T, J, K, ...)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    raw: dict[str, dict[str, Any]] = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        raw[sec] = {}
        for key, text_val in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in section [{sec}]")
            parser = SCHEMA[sec][key][0]
            try:
                raw[sec][key] = parser(text_val)
            except ConfigError as exc:
                raise ConfigError(f"[{sec}] {key}: {exc}") from None
    return raw


def parse_config(text: str, preset: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Parse INI text on top of defaults, an optional preset and explicit overrides.

    Precedence, lowest first: built-in defaults, the preset (from the
    argument or from ``[run] preset``), the file's own keys, ``overrides``.
    """
    raw = _read_ini(text)
    name = preset or raw.get("run", {}).get("preset", "")
    vals = _defaults()
    if name:
        _merge(vals, preset_values(name))
        vals["run"]["preset"] = name
    _merge(vals, raw)
    if preset:
        vals["run"]["preset"] = preset
    if overrides:
        _merge(vals, overrides)
    return build_config(vals)


def load_config(path: str | Path | None, preset: str | None = None, overrides: dict | None = None) -> RunConfig:
    text = "" if path is None else Path(path).read_text()
    return parse_config(text, preset=preset, overrides=overrides)


def parse_flag_override(item: str) -> tuple[str, str, Any]:
    """``key=value`` or ``section.key=value``; bare keys are looked up in [flags]."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, text = item.split("=", 1)
    key = key.strip()
    if "." in key:
        sec, key = key.split(".", 1)
    else:
        sec = "flags"
    if sec not in SCHEMA or key not in SCHEMA[sec]:
        raise ConfigError(f"unknown override key {sec}.{key}")
    try:
        return sec, key, SCHEMA[sec][key][0](text)
    except ConfigError as exc:
        raise ConfigError(f"override {sec}.{key}: {exc}") from None


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(x)) for x in value)
    return str(value)


def dumps_config(cfg: RunConfig) -> str:
    """Every effective value, in schema order.

    The preset name is written as a comment only: the values already contain
    its expansion, and re-applying it would be redundant.
    """
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for key in keys:
            if (sec, key) == ("run", "preset"):
                lines.append(f"# expanded from preset: {cfg.preset or 'none'}")
            else:
                lines.append(f"{key} = {_format(cfg.values[sec][key])}")
        lines.append("")
    return "\n".join(lines)
