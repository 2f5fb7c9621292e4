"""Command line entry: one subcommand per pipeline."""

from __future__ import annotations

import argparse
import os
import sys

from .config import PIPELINES, ConfigError, apply_overrides, parse_config
from .runner import PipelineError, run_pipeline

WORKERS_ENV = "DMCHAIN_WORKERS"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dmchain",
        description="Spectra, entanglement, and quench dynamics of disordered "
        "spin-1/2 chains with chiral two- and three-spin couplings.",
    )
    sub = parser.add_subparsers(dest="pipeline", required=True)
    for name in PIPELINES:
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("--config", help="YAML config file; defaults apply without one")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument(
            "--workers",
            type=int,
            default=None,
            help=f"worker processes; 0 runs inline (default: ${WORKERS_ENV} or 0)",
        )
        p.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="dotted config override, e.g. model.d_two=0.5 (repeatable)",
        )
    return parser


def resolve_workers(flag_value: int | None) -> int:
    if flag_value is not None:
        return flag_value
    env = os.environ.get(WORKERS_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"${WORKERS_ENV}={env!r} is not an integer") from None
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        workers = resolve_workers(args.workers)
        if args.config is not None and not os.path.exists(args.config):
            raise ConfigError(f"config file '{args.config}' not found")
        source = args.config if args.config else f"pipeline: {args.pipeline}"
        config = parse_config(source)
        overrides = list(args.override)
        overrides.append(f"pipeline={args.pipeline}")
        if args.out is not None:
            overrides.append(f"output={args.out}")
        if args.seed is not None:
            overrides.append(f"sampling.master_seed={args.seed}")
        config = apply_overrides(config, overrides)
        manifest = run_pipeline(config, workers=workers)
    except (ConfigError, PipelineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"pipeline {manifest.pipeline} finished in {manifest.wall_seconds:.1f} s")
    if manifest.failures:
        print(f"{len(manifest.failures)} of {manifest.n_units} work units failed")
    for name in manifest.files:
        print(os.path.join(config.output, name))
    return 0


if __name__ == "__main__":
    sys.exit(main())
