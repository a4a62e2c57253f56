"""ahx <command> --config <file> [--out DIR] [--seed S]

Exit codes: 0 success, 2 config error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import EXPERIMENTS, ConfigError, load_config
from .numkit import ConvergenceError
from .optimize import TrainingError
from .schrodinger import AssemblyError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
NUMERICAL = (ConvergenceError, TrainingError, AssemblyError, FloatingPointError, ArithmeticError, ValueError)


def build_parser():
    ap = argparse.ArgumentParser(prog="ahx", description="Adaptive Hermite approximation experiments.")
    ap.add_argument("command", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, help="flat key = value config file")
    ap.add_argument("--out", default="out", help="output directory (default: ./out)")
    ap.add_argument("--seed", type=int, default=None, help="overrides the config seed (default 0)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    from .experiments import RUNNERS

    try:
        cfg, digest = load_config(args.config)
        if cfg["experiment"] != args.command:
            raise ConfigError(f"config is for experiment {cfg['experiment']!r}, not {args.command!r}")
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be nonnegative")
            cfg["seed"] = args.seed
        cfg.setdefault("seed", 0)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        meta = {"command": args.command, "config_hash": digest, "seed": cfg["seed"]}
        RUNNERS[args.command](cfg, out, meta)
    except ConfigError as exc:
        print(f"ahx: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL as exc:
        print(f"ahx: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
