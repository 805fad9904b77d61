"""Command line interface.

    audit run <config> [--out DIR] [--workers N] [--seed N]
    audit stats <config> [--out DIR]
    audit validate <config>

Exit status is nonzero whenever any stage fails; failures name the stage
and the cause on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import validate_config
from .errors import AuditError, ConfigError
from .runner import dataset_overview, run_audit


def _add_config_arg(parser):
    parser.add_argument("config_pos", nargs="?", metavar="CONFIG",
                        help="path to the audit config (JSON)")
    parser.add_argument("--config", dest="config_opt", metavar="PATH",
                        help="alternative way to pass the config path")


def _config_path(args):
    if bool(args.config_pos) == bool(args.config_opt):
        raise ConfigError(["pass the config path either positionally or via --config"])
    return args.config_pos or args.config_opt


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="audit",
        description="Audit rating predictors for accuracy, miscalibration, "
                    "and popularity lift across user groups.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute the full audit pipeline")
    _add_config_arg(p_run)
    p_run.add_argument("--out", metavar="DIR", help="output directory (overrides config)")
    p_run.add_argument("--workers", type=int, metavar="N",
                       help="parallel (fold x algorithm) workers")
    p_run.add_argument("--seed", type=int, metavar="N", help="root seed override")

    p_stats = sub.add_parser("stats", help="load the dataset and print its statistics")
    _add_config_arg(p_stats)
    p_stats.add_argument("--out", metavar="DIR", help="also write stats.json into DIR")

    p_val = sub.add_parser("validate", help="validate a config and echo the resolved form")
    _add_config_arg(p_val)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = validate_config(_config_path(args))
        if args.command == "validate":
            json.dump(config.resolved_dict(), sys.stdout, indent=2, sort_keys=True)
            sys.stdout.write("\n")
            return 0
        if args.command == "stats":
            stats = dataset_overview(config)
            json.dump(stats, sys.stdout, indent=2, sort_keys=True)
            sys.stdout.write("\n")
            if args.out:
                from pathlib import Path
                out = Path(args.out)
                out.mkdir(parents=True, exist_ok=True)
                (out / "stats.json").write_text(
                    json.dumps(stats, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
            return 0
        # run
        if args.out is None and config.output_dir is None:
            raise ConfigError(["no output directory: set 'output_dir' in the "
                               "config or pass --out"])
        report = run_audit(config, out_dir=args.out, workers=args.workers,
                           seed=args.seed)
        out = args.out if args.out is not None else config.output_dir
        print(f"audit complete: {len(report.metrics.algorithms)} algorithms, "
              f"{len(report.metrics.group_labels)} groups, "
              f"{report.metrics.n_folds} folds -> {out}")
        return 0
    except ConfigError as exc:
        for violation in exc.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return 2
    except AuditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
