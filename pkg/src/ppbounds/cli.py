"""Command line entry point.

    ppbounds <command> --config PATH [--seed U64] [--replicates N]
                       [--out DIR] [--format json|csv]

Commands mirror the experiment kinds (simulate, bernstein, martingale,
gamma, chaining, empirical, mle).  Exit codes: 0 all verdicts pass, 1 any
failure or unconditioned report, 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .errors import ConfigurationError, PPBoundsError
from .harness import EXPERIMENT_KINDS, load_config, run

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ppbounds",
        description="Simulate point processes and verify concentration bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--replicates", type=int, default=None, help="override replicates")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--format", choices=("json", "csv"), default=None,
                       help="stdout summary format (files are always written)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, kind_override=args.command)
        overrides = {}
        if args.seed is not None:
            overrides["master_seed"] = args.seed
        if args.replicates is not None:
            overrides["replicates"] = args.replicates
        if args.format is not None:
            overrides["format"] = args.format
        if overrides:
            config = dataclasses.replace(config, **overrides)
        report = run(config, out_dir=args.out)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PPBoundsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if config.format == "csv":
        sys.stdout.write(report.to_csv())
    else:
        sys.stdout.write(report.to_jsonl())
    status = "PASS" if report.summary_pass else "FAIL"
    print(f"# {report.version} kind={report.kind} seed={report.master_seed} {status}",
          file=sys.stderr)
    return EXIT_PASS if report.summary_pass else EXIT_FAIL


if __name__ == "__main__":
    raise SystemExit(main())
