"""Command-line interface.

Subcommands::

    bdls run <config> [--out DIR] [--seeds "0 1 2"] [--threads K]
                      [--snapshot-every K]
    bdls validate <config>
    bdls list-experiments
    bdls report <artifact-dir>

``run`` accepts either an INI config or a previously written
manifest.json; the latter reproduces the original CSVs byte for byte.
The default output root is ``$BDLS_OUT_ROOT`` (falling back to ./runs).
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from ._kernels import BACKEND, set_num_threads
from .errors import ConfigError
from .experiments import (
    EXPERIMENT_IDS,
    load_config,
    parse_seeds,
    report,
    run_experiment,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bdls",
        description="Birth-death accelerated Langevin sampling experiments",
    )
    parser.add_argument("--version", action="version",
                        version=f"bdls {__version__} (backend: {BACKEND})")
    sub = parser.add_subparsers(dest="command")

    run_p = sub.add_parser("run", help="run an experiment from a config file")
    run_p.add_argument("config", nargs="?", help="config file or manifest.json")
    run_p.add_argument("--config", dest="config_flag", help="alias for the positional")
    run_p.add_argument("--out", help="output directory (overrides config/out root)")
    run_p.add_argument("--seeds", help="override seed indices, e.g. '0 1 2'")
    run_p.add_argument("--threads", type=int, help="numba thread count")
    run_p.add_argument("--snapshot-every", type=int, dest="snapshot_every",
                       help="override the snapshot interval parameter")

    val_p = sub.add_parser("validate", help="parse a config and echo resolved values")
    val_p.add_argument("config", nargs="?")
    val_p.add_argument("--config", dest="config_flag")

    sub.add_parser("list-experiments", help="print the known experiment ids")

    rep_p = sub.add_parser("report", help="summarize a finished artifact directory")
    rep_p.add_argument("artifact_dir")
    return parser


def _resolve_config_path(args) -> str:
    path = args.config or getattr(args, "config_flag", None)
    if not path:
        raise ConfigError("a config file is required (positional or --config)")
    return path


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        if args.command == "list-experiments":
            for eid in EXPERIMENT_IDS:
                print(eid)
            return 0

        if args.command == "validate":
            spec = load_config(_resolve_config_path(args))
            print(f"experiment: {spec.experiment_id}")
            print(f"seeds: {' '.join(str(s) for s in spec.seeds)}")
            for key in sorted(spec.params):
                print(f"{key} = {spec.params[key]}")
            return 0

        if args.command == "run":
            spec = load_config(_resolve_config_path(args))
            if args.seeds:
                spec.seeds = parse_seeds(args.seeds)
            if args.snapshot_every is not None:
                if "snapshot_every" in spec.params:
                    spec.params["snapshot_every"] = int(args.snapshot_every)
            if args.threads:
                set_num_threads(args.threads)
            out = run_experiment(spec, out_dir=args.out)
            print(f"artifacts written to {out}")
            return 0

        if args.command == "report":
            print(report(args.artifact_dir))
            return 0

        parser.print_help()
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # surface a diagnostic, nonzero exit
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
