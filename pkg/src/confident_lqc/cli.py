"""Command-line entry point: ``lqc-harness run | trace | validate``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, LQCError, MissingFile, ParseError, ValidationError
from .experiment import (
    THREADS_ENV,
    build_scenario,
    emit_csv,
    emit_trace,
    load_config,
    parse_controller,
    resolve_threads,
    run_sweep,
    trace_run,
)

log = logging.getLogger("confident_lqc")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

# problems with the inputs a user wrote, as opposed to failures while running
_INPUT_ERRORS = (ConfigError, MissingFile, ParseError, ValidationError)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lqc-harness",
        description="Seeded sweeps of prediction-aware linear quadratic controllers.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a sweep and write the results CSV")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--out", type=Path, help="directory for the results file (default: output.path as given)")
    run.add_argument("--threads", type=_positive_int, help=f"worker threads (overrides ${THREADS_ENV})")
    run.add_argument("--seed", type=int, help="override monte_carlo.base_seed")

    trace = sub.add_parser("trace", help="write the per-step trajectory of one controller")
    trace.add_argument("--config", required=True, type=Path)
    trace.add_argument("--controller", required=True, help='controller label, e.g. "self_tuning(0.3)"')
    trace.add_argument("--level", required=True, type=float, help="noise level (c or variance)")
    trace.add_argument("--out", required=True, type=Path)
    trace.add_argument("--repetition", type=int, default=0, help="repetition whose noise seed is used")

    validate = sub.add_parser("validate", help="check a config and build its scenario without running")
    validate.add_argument("--config", required=True, type=Path)
    return parser


def _output_path(config, out_dir: Path | None) -> Path:
    path = Path(config.output_path)
    return out_dir / path.name if out_dir is not None else path


def _run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, base_seed=args.seed)
    threads = resolve_threads(args.threads)
    log.info("sweep %s: %d levels x %d repetitions on %d thread(s)",
             config.scenario, len(config.noise_levels), config.mc_repetitions, threads)
    rows = run_sweep(config, threads)
    path = _output_path(config, args.out)
    emit_csv(rows, path)
    print(f"wrote {len(rows)} rows to {path}")
    return EXIT_OK


def _trace(args) -> int:
    config = load_config(args.config)
    try:
        parse_controller(args.controller)
    except ConfigError as exc:
        raise ConfigError(f"--controller: {exc}") from None
    if not args.level >= 0:
        raise ConfigError("--level must be nonnegative")
    rollout = trace_run(config, args.controller, args.level, args.repetition)
    emit_trace(rollout, args.out)
    print(f"wrote {len(rollout.states)} steps to {args.out}")
    return EXIT_OK


def _validate(args) -> int:
    config = load_config(args.config)
    scn = build_scenario(config)
    labels = ", ".join(c.label for c in config.controllers)
    print(
        f"ok: {config.scenario}, T={config.horizon}, n={scn.sys.n}, m={scn.sys.m}, "
        f"{len(config.noise_levels)} levels x {config.mc_repetitions} repetitions, controllers: {labels}"
    )
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors count as configuration errors; --help exits 0
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handler = {"run": _run, "trace": _trace, "validate": _validate}[args.command]
    try:
        return handler(args)
    except _INPUT_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LQCError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
