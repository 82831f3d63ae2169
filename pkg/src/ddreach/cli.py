"""Command line entry point.

Subcommands: generate | train | reach | validate | report.
Exit codes: 0 success, 1 validation failure, 2 config error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys

from . import pipeline
from .config import ConfigError, load_config
from .dmdc import DegenerateWindowError
from .mlp import TrainingDiverged
from .quadrotor import IntegrationBlowup
from .reach import DegenerateSetError, IllConditionedLiftError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ddreach",
        description="Data-driven real-time reachable set estimation for "
                    "learned quadrotor dynamics.")
    ap.add_argument("--config", required=True, help="path to run config JSON")
    ap.add_argument("--out", help="override output directory")
    ap.add_argument("--seed", type=int, help="override all stage seeds")
    ap.add_argument("--scenario", choices=["nominal", "rotor_failure"],
                    help="override scenario")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("generate", "train", "reach", "validate", "report"):
        sub.add_parser(name)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, scenario=args.scenario,
                          out_dir=args.out, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "generate":
            outdir = pipeline.cmd_generate(cfg)
            print(f"dataset written to {outdir}")
        elif args.command == "train":
            pipeline.cmd_train(cfg)
        elif args.command == "reach":
            _, _, timings = pipeline.cmd_reach(cfg)
            print(f"reach artifacts in {cfg.out_dir}; "
                  f"max step wall time {max(timings):.4f} s")
        elif args.command == "validate":
            pipeline.cmd_validate(cfg)
        elif args.command == "report":
            pipeline.cmd_report(cfg)
    except pipeline.ValidationFailure as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDiverged, IntegrationBlowup, DegenerateWindowError,
            DegenerateSetError, IllConditionedLiftError, RuntimeError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
