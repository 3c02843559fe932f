"""Command-line interface: ``python -m wsnstack run|sweep|report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from typing import Any

from .config import apply_overrides, load_config, reference_scenario
from .const import DOMAIN, VERSION
from .exceptions import ConfigValidationError, WsnStackError
from .harness import format_cell, report, run_scenario, sweep

_LOGGER = logging.getLogger(__name__)


def _parse_list(text: str) -> list[Any]:
    """Split a comma-separated list, decoding each item as JSON when possible."""

    if text.lstrip().startswith("["):
        try:
            value = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigValidationError("values", f"invalid list: {err}") from err
        if not isinstance(value, list):
            raise ConfigValidationError("values", "a list is required")
        return value
    items: list[Any] = []
    for raw in text.split(","):
        raw = raw.strip()
        if not raw:
            continue
        try:
            items.append(json.loads(raw))
        except json.JSONDecodeError:
            items.append(raw)
    return items


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError as err:
        raise ConfigValidationError("seeds", "seeds must be integers") from err


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser of the CLI."""

    parser = argparse.ArgumentParser(prog=DOMAIN, description="Sensor network simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="root logger level",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    def scenario_args(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--config", help="scenario JSON file; the reference scenario if omitted")
        sub.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="set a dotted configuration path",
        )
        sub.add_argument("--out", required=True, help="output directory")

    run = commands.add_parser("run", help="run one scenario")
    scenario_args(run)
    run.add_argument("--seed", type=int, help="run seed; the scenario seed if omitted")

    sweep_cmd = commands.add_parser("sweep", help="sweep one parameter over seeds")
    scenario_args(sweep_cmd)
    sweep_cmd.add_argument("--param", required=True, help="dotted parameter path")
    sweep_cmd.add_argument("--values", required=True, help="comma-separated or JSON list")
    sweep_cmd.add_argument("--seeds", required=True, help="comma-separated seeds")

    report_cmd = commands.add_parser("report", help="compare run directories")
    report_cmd.add_argument("runs", nargs="+", help="run directories, baseline first")
    report_cmd.add_argument("--out", help="directory receiving report.csv")
    return parser


def _scenario(args: argparse.Namespace) -> dict[str, Any]:
    config = load_config(args.config) if args.config else reference_scenario()
    if args.override:
        config = apply_overrides(config, args.override)
    return config


def main(argv: Sequence[str] | None = None) -> int:
    """Run the CLI and return its exit code."""

    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "run":
            metrics = run_scenario(_scenario(args), args.seed, args.out)
            print(json.dumps(metrics.packets, sort_keys=True))
        elif args.command == "sweep":
            rows = sweep(
                _scenario(args),
                args.param,
                _parse_list(args.values),
                _parse_seeds(args.seeds),
                args.out,
            )
            _LOGGER.info("Sweep produced %d rows", len(rows))
        else:
            columns, rows = report(args.runs, args.out)
            print(",".join(columns))
            for row in rows:
                print(",".join(format_cell(row[c]) for c in columns))
    except WsnStackError as err:
        print(f"error: {err.code}: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: io: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
