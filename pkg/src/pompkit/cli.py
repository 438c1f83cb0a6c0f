"""Command-line entry point.

Usage::

    pompkit <command> --config experiment.yaml [--seed N] [--reps R]
                      [--jobs K] [--out DIR]
    pompkit summarize RUN_DIR

Exit codes: 0 on success, 2 on configuration errors, 3 when the particle
filter exceeded its failure budget.
"""

from __future__ import annotations

import argparse
import json
import sys

import yaml

from .errors import ConfigValidationError, FilteringLimitExceeded
from .harness import COMMANDS, run, summarize


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pompkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} command from a config file")
        p.add_argument("--config", required=True, help="YAML experiment configuration")
        p.add_argument("--seed", type=int, default=None, help="override replication.seed")
        p.add_argument("--reps", type=int, default=None, help="override replication.reps")
        p.add_argument("--jobs", type=int, default=1, help="replicate-level worker processes")
        p.add_argument("--out", default=None, help="output directory")
    p = sub.add_parser("summarize", help="aggregate completed runs into a report")
    p.add_argument("run_dir", help="directory containing summary.json files")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "summarize":
            report = summarize(args.run_dir)
            json.dump(report, sys.stdout, indent=2, sort_keys=True)
            sys.stdout.write("\n")
            return 0
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        raw["command"] = args.command
        summary = run(raw, out=args.out, jobs=args.jobs, seed=args.seed, reps=args.reps)
        n = len(summary["replicates"])
        print(f"completed {n} replicate(s); summary written to {args.out or raw.get('output') or 'pompkit_run'}")
        return 0
    except ConfigValidationError as exc:
        print(exc, file=sys.stderr)
        return 2
    except FilteringLimitExceeded as exc:
        print(exc, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
