"""Command line entry point: run one configured experiment.

Exit codes: 0 on success, 2 for config problems (bad file, unknown
experiment or key, malformed value), 3 when an estimator gives up
(no crossing in the scanned range, disconnected probe, bad split).
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigParse, LrpercError, UnknownExperiment
from .experiments import parse_config, run_experiment


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lrperc", description="long-range percolation experiments")
    parser.add_argument("--config", required=True,
                        help="experiment config file")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--workers", type=int, default=1,
                        help="processes for replicate loops")
    parser.add_argument("--out", default=".",
                        help="output directory for CSV and summary")
    args = parser.parse_args(argv)

    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2

    try:
        cfg = parse_config(text)
    except (ConfigParse, UnknownExperiment) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2

    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.workers < 1:
        print("config error: --workers must be positive", file=sys.stderr)
        return 2

    try:
        summary = run_experiment(cfg, out_dir=args.out, workers=args.workers)
    except ConfigParse as err:
        # runner-level validation of params values
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (LrpercError, ValueError) as err:
        print(f"estimator error: {err}", file=sys.stderr)
        return 3

    print(f"{cfg.name}: wrote {', '.join(summary['outputs'])} and "
          f"summary.json to {args.out}")
    return 0
