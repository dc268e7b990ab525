"""Command-line front end.

Commands::

    entropy-american price      --config run.ini [--out DIR]
    entropy-american table1     [--config sweep.ini] [--reduced]
    entropy-american lambda-rate [--config put.ini] [--upper]
    entropy-american pia-rate   [--config put.ini]

Shared flags: ``--config PATH``, ``--out DIR`` (default ``results``),
``--seed N``, ``--threads N`` (0 picks the CPU count; without the flag the
``ENTROPY_AMERICAN_THREADS`` variable is used, else 1) and ``--reduced``
(CI-scale sizes). The configuration format and keys are described in
:mod:`entropy_american.config`; study commands also read a ``[sweep]``
section with keys s0, lambdas, per_stage, total, lattice_steps, iterations,
upper and upper_paths.

Exit codes: 0 success, 2 configuration error (message carries the line
number), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import math
import os
import sys
from pathlib import Path

from . import experiments
from .config import ConfigError, RawConfig, _bool, _floats, _int, load_config
from .experiments import ExperimentSpec
from .model import LambdaSchedule, RunConfig
from .pia import price
from .scheme import NumericalError

THREADS_ENV = "ENTROPY_AMERICAN_THREADS"

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

REDUCED_PATHS = 20000
REDUCED_PER_STAGE = 300
REDUCED_LATTICE_STEPS = 50

TABLE1_COLUMNS = ("s0", "lambda", "pia", "pia_se", "classical", "classical_se", "lattice",
                  "lattice_se")
LAMBDA_RATE_COLUMNS = ("lambda", "v_lambda_root", "V_root", "gap", "rate_ratio")
UPPER_COLUMNS = ("upper", "upper_se", "upper_gap")
PIA_RATE_COLUMNS = ("lambda", "m", "v_root", "error", "min_node_step")


def format_number(value) -> str:
    """Locale-independent text for a CSV cell."""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return f"{value:.10g}"
    return str(value)


def rows_to_csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_number(row[c]) for c in columns])
    return buf.getvalue()


def resolve_threads(flag: int | None) -> int:
    if flag is None:
        env = os.environ.get(THREADS_ENV, "").strip()
        if not env:
            return 1
        try:
            flag = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if flag < 0:
        raise ConfigError(f"thread count must be >= 0, got {flag}")
    return flag or (os.cpu_count() or 1)


def _reduce_schedule(schedule: LambdaSchedule) -> LambdaSchedule:
    return LambdaSchedule(tuple((lam, min(it, REDUCED_PER_STAGE)) for lam, it in schedule.stages))


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    changes = {"threads": resolve_threads(args.threads)}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.reduced:
        changes["paths"] = min(config.paths, REDUCED_PATHS)
        changes["schedule"] = _reduce_schedule(config.schedule)
    return dataclasses.replace(config, **changes)


def _sweep_spec(kind: str, config: RunConfig, raw: RawConfig | None, args) -> ExperimentSpec:
    defaults = {"table1": {}, "lambda_rate": {"lambdas": experiments.RATE_LAMBDAS},
                "pia_rate": {"lambdas": (0.1,)}}[kind]
    fields = dict(defaults)
    if raw is not None and "sweep" in raw.sections:
        get = raw.get
        for key, convert in (("s0", _floats), ("lambdas", _floats)):
            if raw.has("sweep", key):
                fields["s0_values" if key == "s0" else key] = tuple(get("sweep", key, convert))
        for key in ("per_stage", "lattice_steps", "iterations", "upper_paths"):
            if raw.has("sweep", key):
                fields[key] = get("sweep", key, _int)
        if raw.has("sweep", "total"):
            total = get("sweep", "total")
            fields["total"] = None if total.lower() == "none" else get("sweep", "total", _int)
        if raw.has("sweep", "upper"):
            fields["upper"] = get("sweep", "upper", _bool)
    if getattr(args, "upper", False):
        fields["upper"] = True
    if args.reduced:
        if kind == "table1":
            fields.update(per_stage=min(fields.get("per_stage", 500), REDUCED_PER_STAGE),
                          total=None)
        else:
            fields["lattice_steps"] = min(fields.get("lattice_steps") or config.grid.N,
                                          REDUCED_LATTICE_STEPS)
            fields["upper_paths"] = min(fields.get("upper_paths", 100000), REDUCED_PATHS)
    try:
        return ExperimentSpec(kind=kind, config=config, out_dir=Path(args.out), **fields)
    except ValueError as exc:
        line = raw.line_of("sweep", "lambdas") if raw is not None else None
        raise ConfigError(str(exc), line, raw.source if raw is not None else "<sweep>") from None


def _load(args, default: RunConfig | None) -> tuple[RunConfig, RawConfig | None]:
    if args.config is not None:
        config, raw = load_config(args.config)
    elif default is not None:
        config, raw = default, None
    else:
        raise ConfigError("this command needs --config PATH")
    try:
        return _apply_overrides(config, args), raw
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc.strerror}") from None
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return out


def cmd_price(args) -> int:
    config, _ = _load(args, None)
    out = _out_dir(args)
    report = price(config)
    text = report.to_text()
    sys.stdout.write(text)
    (out / "report.txt").write_text(text)
    if report.trace:
        (out / "trace.csv").write_text(report.trace_csv())
    return EXIT_OK


def _study(kind: str, default: RunConfig, columns, filename: str, args) -> int:
    config, raw = _load(args, default)
    spec = _sweep_spec(kind, config, raw, args)
    out = _out_dir(args)
    rows = experiments.run(spec)
    if kind == "lambda_rate" and spec.upper:
        columns = columns + UPPER_COLUMNS
    text = rows_to_csv(rows, columns)
    sys.stdout.write(text)
    (out / filename).write_text(text)
    return EXIT_OK


def cmd_table1(args) -> int:
    paths = REDUCED_PATHS if args.reduced else 100000
    return _study("table1", experiments.table1_config(paths), TABLE1_COLUMNS, "table1.csv", args)


def cmd_lambda_rate(args) -> int:
    return _study("lambda_rate", experiments.put_config(), LAMBDA_RATE_COLUMNS,
                  "lambda_rate.csv", args)


def cmd_pia_rate(args) -> int:
    return _study("pia_rate", experiments.put_config(), PIA_RATE_COLUMNS, "pia_rate.csv", args)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI run configuration")
    common.add_argument("--out", default="results", help="output directory (default: results)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--threads", type=int, help=f"worker threads, 0 = auto (env {THREADS_ENV})")
    common.add_argument("--reduced", action="store_true", help="CI-scale sizes")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="entropy-american",
                                     description="Entropy-regularized American option pricing.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("price", parents=[common], help="price one configuration"
                   ).set_defaults(func=cmd_price)
    sub.add_parser("table1", parents=[common], help="two-asset max-call benchmark table"
                   ).set_defaults(func=cmd_table1)
    rate = sub.add_parser("lambda-rate", parents=[common], help="lambda convergence on a lattice")
    rate.add_argument("--upper", action="store_true", help="add duality upper-bound columns")
    rate.set_defaults(func=cmd_lambda_rate)
    sub.add_parser("pia-rate", parents=[common], help="policy-iteration convergence on a lattice"
                   ).set_defaults(func=cmd_pia_rate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be nonnegative", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
