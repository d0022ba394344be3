"""Command line entry point.

Subcommands:
  run <config.json> [KEY=VALUE ...]   run one experiment, write its outputs
  validate <config.json>              check a config without computing
  constants --d D --gamma-zero B --m M --p P   print the constants as JSON

Exit codes: 0 success, 2 config error, 3 experiment invalid (a validity
condition such as the margin-mass threshold was breached), 4 divergence or
non-convergence when the config did not permit it.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys

from .errors import ConfigError, ExperimentInvalidError
from .experiments import (
    apply_overrides,
    emit_record,
    load_config,
    resolve_outdir,
    run_experiment,
    validate_config,
)
from .spectral import constants_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVALID = 3
EXIT_DIVERGED = 4


def _parse_exponent(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return math.inf
    return float(text)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modspace-nls",
        description="Experiments for the higher-order anisotropic Schrodinger "
                    "flow: decay scans, inequality scans, kernel bounds, and "
                    "small-data existence runs.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment from a JSON config")
    run.add_argument("config", help="path to the experiment config")
    run.add_argument("overrides", nargs="*", metavar="KEY=VALUE",
                     help="dotted-path overrides applied before validation")

    val = sub.add_parser("validate", help="validate a config file and exit")
    val.add_argument("config", help="path to the experiment config")

    con = sub.add_parser("constants", help="print the closed-form constants as JSON")
    con.add_argument("--d", type=int, required=True, help="spatial dimension")
    con.add_argument("--gamma-zero", type=str, required=True,
                     choices=("true", "false"),
                     help="whether the fourth-order coefficient vanishes")
    con.add_argument("--m", type=int, required=True, help="nonlinearity power")
    con.add_argument("--p", type=_parse_exponent, required=True,
                     help="Lebesgue exponent (number or 'inf')")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    cfg = apply_overrides(cfg, args.overrides)
    cfg = validate_config(cfg)
    record = run_experiment(cfg)
    outdir = resolve_outdir(record.config)
    paths = emit_record(record, outdir)
    print(f"experiment: {record.experiment}")
    print(f"verdict: {record.verdict}")
    for p in paths:
        print(f"wrote {p}")
    if record.experiment == "existence" and record.verdict in ("diverged",
                                                               "no-convergence"):
        allowed = record.validity.get("allow_divergence", False)
        if not allowed:
            print("divergence outcome was not permitted by the config",
                  file=sys.stderr)
            return EXIT_DIVERGED
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    validate_config(cfg)
    print("ok")
    return EXIT_OK


def _cmd_constants(args) -> int:
    report = constants_report(args.d, args.gamma_zero == "true", args.m, args.p)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "constants":
            return _cmd_constants(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExperimentInvalidError as exc:
        print(f"experiment invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    parser.error(f"unknown command {args.command!r}")
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
