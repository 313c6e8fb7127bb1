"""Command line entry point: ``simulate <config-file> [options]``.

Exit codes: 0 success (including an amplitude escape in a blow-up
experiment), 2 configuration error, 3 solver failure, 4 amplitude escape in a
decay experiment, 5 SBP identity defect above tolerance.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings

from .config import load_config, parse_flag_override, preset_names
from .errors import ConfigError, InstabilityDetected, SolverError
from .experiments import EXIT_CONFIG, EXIT_SOLVER, run_experiment


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="simulate", description="Damped suspension-bridge plate simulations.")
    ap.add_argument("config", nargs="?", help="INI configuration file (optional when --preset is given)")
    ap.add_argument("--preset", choices=preset_names(), help="start from a named parameter set")
    ap.add_argument("--out", help="output directory (overrides [run] output_dir)")
    ap.add_argument("--record-every", type=int, help="energy sampling interval in steps")
    ap.add_argument(
        "--flag",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a flag, or any key as section.key=value; repeatable",
    )
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    logging.captureWarnings(True)
    if args.config is None and args.preset is None:
        print("simulate: a config file or --preset is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        overrides: dict = {}
        for item in args.flag:
            sec, key, val = parse_flag_override(item)
            overrides.setdefault(sec, {})[key] = val
        if args.record_every is not None:
            overrides.setdefault("run", {})["record_every"] = args.record_every
        if args.out is not None:
            overrides.setdefault("run", {})["output_dir"] = args.out
        cfg = load_config(args.config, preset=args.preset, overrides=overrides)
    except (ConfigError, OSError) as exc:
        print(f"simulate: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return run_experiment(cfg)
    except ConfigError as exc:
        print(f"simulate: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, InstabilityDetected) as exc:
        print(f"simulate: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
