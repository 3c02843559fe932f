"""Run, sweep and report entry points writing byte-stable artifacts."""

from __future__ import annotations

import asyncio
import csv
import json
import logging
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import Executor, ProcessPoolExecutor
from pathlib import Path
from typing import Any

from tqdm.asyncio import tqdm

from .const import (
    EVENTS_FILE,
    LABEL_BASELINE,
    LABEL_DELTA,
    PACKETS_FILE,
    REPORT_FILE,
    SCHEMA_VERSION,
    SUMMARY_FILE,
    SWEEP_FILE,
    SWEEP_TREND_FILE,
    TIMESERIES_FILE,
    VERSION,
)
from .config import with_parameter
from .coordinator import ScenarioCoordinator
from .exceptions import NoRunsError, SchemaMismatchError
from .helpers import format_float, normalize_for_json, rank_correlation
from .metrics import (
    PACKET_COLUMNS,
    TIMESERIES_COLUMNS,
    RunMetrics,
    flatten_metrics,
    packet_row,
    timeseries_row,
)

_LOGGER = logging.getLogger(__name__)

EVENT_COLUMNS: tuple[str, ...] = ("time", "node", "module", "kind")

# Metrics summarised against the swept value in the trend file.
TREND_METRICS: tuple[str, ...] = ("packets.delivery_ratio", "deadline.miss_ratio")


def format_cell(value: Any) -> str:
    """Return the CSV text of one value."""

    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def write_csv(
    path: Path, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]
) -> None:
    """Write ``rows`` with a fixed column order and float format."""

    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_cell(row.get(column)) for column in columns])


def write_json(path: Path, data: Any) -> None:
    """Write ``data`` as sorted, rounded JSON."""

    text = json.dumps(normalize_for_json(data), indent=2, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8")


def summary_document(
    config: Mapping[str, Any], seed: int, metrics: RunMetrics
) -> dict[str, Any]:
    """Return the content of ``summary.json``."""

    return {
        "schema_version": SCHEMA_VERSION,
        "version": VERSION,
        "seed": seed,
        "config": config,
        "metrics": metrics.as_dict(),
    }


def run_scenario(
    config: Mapping[str, Any], seed: int | None = None, out_dir: str | Path | None = None
) -> RunMetrics:
    """Run one scenario and, with ``out_dir``, write its artifacts."""

    coordinator = ScenarioCoordinator(config, seed)
    metrics = coordinator.run()
    if out_dir is None:
        return metrics

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = config["outputs"]
    write_json(out / SUMMARY_FILE, summary_document(config, coordinator.seed, metrics))
    if outputs["timeseries"]:
        write_csv(
            out / TIMESERIES_FILE,
            TIMESERIES_COLUMNS,
            (timeseries_row(sample) for sample in coordinator.samples),
        )
    if outputs["packets"]:
        write_csv(
            out / PACKETS_FILE,
            PACKET_COLUMNS,
            (packet_row(p) for _, p in sorted(coordinator.ledger.packets.items())),
        )
    if outputs["events"]:
        write_csv(
            out / EVENTS_FILE,
            EVENT_COLUMNS,
            (dict(zip(EVENT_COLUMNS, record)) for record in coordinator.sim.trace),
        )
    _LOGGER.info("Wrote run artifacts to %s", out)
    return metrics


def _sweep_point(
    config: Mapping[str, Any],
    path: str,
    value: Any,
    seed: int,
    out_dir: str | None,
) -> dict[str, Any]:
    point = with_parameter(config, path, value)
    metrics = run_scenario(point, seed, out_dir)
    return {"value": value, "seed": seed, **flatten_metrics(metrics.as_dict())}


def _trend(rows: Sequence[Mapping[str, Any]]) -> dict[str, Any]:
    numeric = all(
        isinstance(row["value"], (int, float)) and not isinstance(row["value"], bool)
        for row in rows
    )
    trend: dict[str, Any] = {}
    for metric in TREND_METRICS:
        values = [row for row in rows if row.get(metric) is not None]
        by_value: dict[str, list[float]] = {}
        for row in values:
            by_value.setdefault(json.dumps(row["value"]), []).append(row[metric])
        trend[metric] = {
            "spearman": (
                rank_correlation([r["value"] for r in values], [r[metric] for r in values])
                if numeric
                else None
            ),
            "means": {key: sum(v) / len(v) for key, v in by_value.items()},
        }
    return trend


async def async_sweep(
    config: Mapping[str, Any],
    path: str,
    values: Sequence[Any],
    seeds: Sequence[int],
    out_dir: str | Path,
    *,
    executor: Executor | None = None,
) -> list[dict[str, Any]]:
    """Run every (value, seed) point, in parallel, and write ``sweep.csv``.

    Rows come back in (value, seed) order whatever the completion order.
    """

    for value in values:
        with_parameter(config, path, value)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    points = [(value, seed) for value in values for seed in seeds]
    loop = asyncio.get_running_loop()
    owned = executor is None
    pool = executor or ProcessPoolExecutor()
    try:
        rows = await tqdm.gather(
            *(
                loop.run_in_executor(
                    pool,
                    _sweep_point,
                    config,
                    path,
                    value,
                    seed,
                    str(out / f"run_{index:03d}"),
                )
                for index, (value, seed) in enumerate(points)
            ),
            desc=f"sweep {path}",
            disable=None,
        )
    finally:
        if owned:
            pool.shutdown()

    columns = ["value", "seed"] + sorted({k for row in rows for k in row} - {"value", "seed"})
    write_csv(
        out / SWEEP_FILE,
        columns,
        ({**row, "value": json.dumps(row["value"])} for row in rows),
    )
    write_json(out / SWEEP_TREND_FILE, {"parameter": path, "trend": _trend(rows)})
    _LOGGER.info("Sweep of %s over %d points written to %s", path, len(rows), out)
    return list(rows)


def sweep(
    config: Mapping[str, Any],
    path: str,
    values: Sequence[Any],
    seeds: Sequence[int],
    out_dir: str | Path,
    *,
    executor: Executor | None = None,
) -> list[dict[str, Any]]:
    """Blocking wrapper around :func:`async_sweep`."""

    return asyncio.run(
        async_sweep(config, path, values, seeds, out_dir, executor=executor)
    )


def load_summary(run_dir: str | Path) -> dict[str, Any]:
    """Read a run's ``summary.json`` and check its schema version."""

    path = Path(run_dir) / SUMMARY_FILE
    with path.open("r", encoding="utf-8") as handle:
        summary = json.load(handle)
    found = summary.get("schema_version")
    if found != SCHEMA_VERSION:
        raise SchemaMismatchError(str(path), found, SCHEMA_VERSION)
    return summary


def _labels(run_dirs: Sequence[str | Path]) -> list[str]:
    labels: list[str] = []
    for index, run_dir in enumerate(run_dirs):
        label = Path(run_dir).name or str(run_dir)
        if label in labels:
            label = f"{label}_{index}"
        labels.append(label)
    return labels


def relative_delta(value: float | None, baseline: float | None) -> float | None:
    """Return ``(value - baseline) / baseline``; ``None`` when undefined."""

    if value is None or baseline is None or baseline == 0:
        return None
    return (value - baseline) / baseline


def report(
    run_dirs: Sequence[str | Path], out_dir: str | Path | None = None
) -> tuple[list[str], list[dict[str, Any]]]:
    """Compare runs side by side against the first one.

    Returns the column names and one row per metric; with ``out_dir`` the
    table is also written to ``report.csv``.
    """

    if not run_dirs:
        raise NoRunsError
    labels = _labels(run_dirs)
    flats = [flatten_metrics(load_summary(d)["metrics"]) for d in run_dirs]
    metrics = sorted({key for flat in flats for key in flat})
    delta_labels = [f"{LABEL_DELTA}:{label}" for label in labels[1:]]
    columns = ["metric", *labels, *delta_labels]

    rows: list[dict[str, Any]] = []
    for metric in metrics:
        baseline = flats[0].get(metric)
        row: dict[str, Any] = {"metric": metric}
        for label, flat in zip(labels, flats):
            row[label] = flat.get(metric)
        for delta_label, flat in zip(delta_labels, flats[1:]):
            row[delta_label] = relative_delta(flat.get(metric), baseline)
        rows.append(row)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / REPORT_FILE, columns, rows)
        _LOGGER.info("Report against %s %s written to %s", LABEL_BASELINE, labels[0], out)
    return columns, rows
