"""``voi-sched`` command line.

Exit codes: 0 success, 1 output or runtime error, 2 config error,
3 verification failure.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from typing import Optional, Sequence

from .config import ConfigParseError, SchemaError, load_config
from .engine import ConfigError
from .experiments import run_experiment
from .index import MODES
from .results import OutputError, emit_results

COMMANDS = {"run": "single", "compare": "compare", "multiproc": "multiproc", "spsa": "spsa", "verify": "verify"}
EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="voi-sched", description="Value-of-information packet scheduling simulator.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="JSON experiment config")
        cmd.add_argument("--out", required=True, help="output directory")
        cmd.add_argument("--seed", type=int)
        cmd.add_argument("--reps", type=int)
        cmd.add_argument("--mode", choices=MODES)
        cmd.add_argument("--arrival-lag", type=int, choices=(0, 1), dest="arrival_lag")
        cmd.add_argument("--workers", type=int)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = load_config(args.config)
        want = COMMANDS[args.command]
        # `compare` configs may also be run one policy at a time, and vice versa
        if spec.experiment != want and {spec.experiment, want} != {"single", "compare"}:
            raise SchemaError(f"config describes a {spec.experiment!r} experiment, not {want!r}")
        if want == "single" and len(spec.policies) != 1:
            raise SchemaError("`run` takes a config with exactly one policy; use `compare` for several")
        spec = spec.with_overrides(args.seed, args.reps, args.mode, args.arrival_lag)
        spec = replace(spec, experiment=want, workers=spec.workers if args.workers is None else max(1, args.workers))
    except (ConfigParseError, ConfigError) as exc:
        print(f"voi-sched: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"voi-sched: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        bundle = run_experiment(spec)
        paths = emit_results(bundle, args.out)
    except OutputError as exc:
        print(f"voi-sched: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for cmd in paths:
        print(cmd)
    for row in bundle.summary:
        print(f"{row[1]}: mean cost {row[2]:.6g} (se {row[3]:.3g}, n={row[4]})")
    if bundle.passed is not None:
        print("verification", "passed" if bundle.passed else "FAILED")
        if not bundle.passed:
            return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
