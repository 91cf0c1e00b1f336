"""Command-line front end: one pipeline stage per invocation.

Usage::

    basisrisk <stage> --config run.json [--threads=N] [--key=value ...]

where ``<stage>`` is one of the pipeline stages or ``validate``. Override
flags mirror the configuration fields (``--quantile=0.9``,
``--synth.n_farms=4``); values parse as JSON when possible and as plain
strings otherwise.

Exit codes: 0 success, 2 schema error, 3 numerical failure, 4 missing
prerequisite.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .exceptions import (
    BasisRiskError,
    MissingHoursError,
    MissingPrerequisiteError,
    MissingPriceError,
    SchemaError,
)
from .pipeline import STAGES, load_config, run_stage, validate

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_NUMERICAL = 3
EXIT_MISSING_PREREQUISITE = 4


def exit_code_for(exc: BasisRiskError) -> int:
    """Map a pipeline failure to the documented process exit code.

    Schema violations and data-coverage gaps that point at specific rows
    count as schema errors; estimation and allocation failures count as
    numerical; absent upstream artifacts ask for the producing stage.
    """
    if isinstance(exc, MissingPrerequisiteError):
        return EXIT_MISSING_PREREQUISITE
    if isinstance(exc, (SchemaError, MissingHoursError, MissingPriceError)):
        return EXIT_SCHEMA
    return EXIT_NUMERICAL


def _parse_overrides(tokens: list[str]) -> dict:
    overrides = {}
    for token in tokens:
        body = token[2:] if token.startswith("--") else ""
        key, sep, value = body.partition("=")
        if not key or not sep:
            raise SchemaError(f"override {token!r} must look like --key=value")
        overrides[key] = value
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="basisrisk",
        description="Weather-index insurance pipeline for solar producers",
        allow_abbrev=False,
    )
    parser.add_argument(
        "stage",
        choices=[*STAGES, "validate"],
        help="pipeline stage to run, or 'validate' for input diagnostics",
    )
    parser.add_argument(
        "--config", required=True, help="path to the JSON run configuration"
    )
    parser.add_argument(
        "--threads", type=int, default=None,
        help="cap on within-stage worker threads",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args, extra = build_parser().parse_known_args(argv)
    try:
        overrides = _parse_overrides(extra)
        if args.threads is not None:
            overrides["threads"] = args.threads
        cfg = load_config(args.config, overrides)
        if args.stage == "validate":
            print(json.dumps(validate(cfg), indent=2, sort_keys=True))
            return EXIT_OK
        for path in run_stage(args.stage, cfg):
            print(path)
        return EXIT_OK
    except BasisRiskError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
