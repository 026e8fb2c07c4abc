"""Command line entry point: ``fpme <experiment> [--config PATH] [--seed N] [--out DIR]``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np
from scipy import linalg

from .asymptotics import StabilizationError, UniquenessError
from .config import EXPERIMENTS, ConfigError, parse_config, validate
from .evolution import ResolventError
from .presets import preset
from .spectral import EigensolverError

EXIT_PASS, EXIT_VERDICT, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
NUMERICAL_ERRORS = (ResolventError, EigensolverError, UniquenessError, StabilizationError,
                    linalg.LinAlgError, np.linalg.LinAlgError, FloatingPointError, RuntimeError)


def build_parser():
    p = argparse.ArgumentParser(prog="fpme", description="Fractional porous medium experiments")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="JSON config file (defaults to the experiment preset)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def thread_limit():
    """Thread cap from FPME_THREADS (default 1, which keeps BLAS reductions reproducible)."""
    raw = os.environ.get("FPME_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError([f"FPME_THREADS: expected an integer, got {raw!r}"])
    if n < 1:
        raise ConfigError(["FPME_THREADS: must be at least 1"])
    return n


def load(args):
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError([f"cannot read config: {exc}"]) from exc
        data_cfg = parse_config(text, args.experiment)
        data = data_cfg.to_dict()
    else:
        data = preset(args.experiment)
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["output_dir"] = args.out
    return validate(data, args.experiment)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from threadpoolctl import threadpool_limits

    from .runner import run
    try:
        cfg = load(args)
        nthreads = thread_limit()
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with threadpool_limits(limits=nthreads):
            man = run(cfg)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure in experiment '{cfg.experiment}': {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for v in man.verdicts:
        print(f"{'PASS' if v.passed else 'FAIL'} {v.name}: measured={v.measured} expected={v.expected}")
    print(f"wrote {cfg.output_dir}/{cfg.experiment}/ ({man.wall_time:.1f}s)")
    return EXIT_PASS if man.passed else EXIT_VERDICT


if __name__ == "__main__":
    sys.exit(main())
