"""Command-line interface.

Subcommands:
  run <config>        execute a scenario and emit its report
  validate <config>   schema-check a scenario without running it
  list-geometries     print the built-in geometry table

Exit codes: 0 success, 2 configuration error, 3 numeric/engine error.
Reports go to --output (or the config's output.path, or stdout); timing is
printed to stderr so that report files stay byte-deterministic.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from . import catalog, scenarios
from .errors import ConfigError, ExpressionSyntaxError, PathTransportError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ENGINE = 3


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="pathtransport",
        description="Linear transports along paths: transport matrices, "
        "derivations, torsion, curvature, flat frames, holonomy.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario config")
    run.add_argument("config", help="path to a scenario JSON file")
    run.add_argument("--output", help="write the report to this file")
    run.add_argument("--format", choices=("json", "csv"), help="report format")
    run.add_argument("--seed", type=int, help="seed for randomized tasks")
    run.add_argument(
        "--fixed-step", type=float, dest="fixed_step",
        help="use fixed-step integration with this step size",
    )

    val = sub.add_parser("validate", help="check a scenario config")
    val.add_argument("config", help="path to a scenario JSON file")

    sub.add_parser("list-geometries", help="print the built-in geometries")
    return parser


def _load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc


def _emit(text, output_path):
    if output_path:
        with open(output_path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _run(args):
    doc = None
    try:
        doc = _load_config(args.config)
        started = time.perf_counter()
        report = scenarios.run_scenario(doc, seed=args.seed, fixed_step=args.fixed_step)
        elapsed = time.perf_counter() - started
    except (ConfigError, ExpressionSyntaxError) as exc:
        report = scenarios.error_report(doc, exc)
        sys.stderr.write(scenarios.render_report(report, "json"))
        return EXIT_CONFIG
    except PathTransportError as exc:
        report = scenarios.error_report(doc, exc)
        fmt, out = _output_settings(args, doc)
        _emit(scenarios.render_report(report, fmt), out)
        return EXIT_ENGINE
    fmt, out = _output_settings(args, doc)
    _emit(scenarios.render_report(report, fmt), out)
    sys.stderr.write(f"elapsed_seconds {elapsed:.6f}\n")
    return EXIT_OK


def _output_settings(args, doc):
    conf = doc.get("output", {}) if isinstance(doc, dict) else {}
    fmt = args.format or conf.get("format", "json")
    out = args.output or conf.get("path")
    return fmt, out


def _validate(args):
    try:
        doc = _load_config(args.config)
        scenarios.validate_config(doc)
        scenarios.build_geometry(doc["geometry"])
    except (ConfigError, ExpressionSyntaxError) as exc:
        record = {"status": "invalid", "error": {"type": type(exc).__name__, "message": str(exc)}}
        sys.stderr.write(json.dumps(record, sort_keys=True, indent=2) + "\n")
        return EXIT_CONFIG
    record = {"status": "valid", "config_sha256": scenarios.config_hash(doc)}
    sys.stdout.write(json.dumps(record, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def _list_geometries(args):
    for name in catalog.list_geometries():
        geo = catalog.get_geometry(name)
        chart = geo.connection.chart
        sys.stdout.write(
            f"{name}  (base {chart.base_dim}, fiber {chart.fiber_dim})  {geo.description}\n"
        )
    return EXIT_OK


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _run,
        "validate": _validate,
        "list-geometries": _list_geometries,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
