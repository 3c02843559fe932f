# pylint: disable=missing-function-docstring

"""Tests for the run, sweep and report entry points and the CLI."""

import csv
import json
from concurrent.futures import ThreadPoolExecutor

import pytest

from wsnstack.__main__ import main
from wsnstack.exceptions import NoRunsError, ParameterPathError, SchemaMismatchError
from wsnstack.harness import async_sweep, format_cell, relative_delta, report, run_scenario

from .conftest import LINE

FLOW = {
    "source_node": 0,
    "dest": {"x": 130.0, "y": 100.0, "radius": 5.0},
    "period": 0.2,
    "deadline": 1.0,
    "start": 0.5,
}


@pytest.fixture
def small_config(make_config):
    return make_config(
        LINE,
        duration=2.0,
        traffic=[FLOW],
        outputs={"timeseries": True, "events": True},
    )


def test_format_cell() -> None:
    assert format_cell(None) == ""
    assert format_cell(True) == "true"
    assert format_cell(0.1 + 0.2) == "0.3"
    assert format_cell(7) == "7"


def test_relative_delta() -> None:
    assert relative_delta(1.5, 1.0) == pytest.approx(0.5)
    assert relative_delta(1.0, 0.0) is None
    assert relative_delta(None, 1.0) is None


def test_same_seed_gives_identical_artifacts(small_config, tmp_path) -> None:
    first = run_scenario(small_config, 5, tmp_path / "a")
    second = run_scenario(small_config, 5, tmp_path / "b")
    assert first.as_dict() == second.as_dict()
    for name in ("summary.json", "packets.csv", "timeseries.csv", "events.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text(encoding="utf-8"))
    assert summary["seed"] == 5
    assert summary["schema_version"] == 1
    assert summary["metrics"]["packets"]["generated"] > 0


def test_packets_file_lists_every_packet(small_config, tmp_path) -> None:
    metrics = run_scenario(small_config, 1, tmp_path)
    with (tmp_path / "packets.csv").open(encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == metrics.packets["generated"]
    assert metrics.conservation_holds


def test_report_compares_against_first_run(small_config, tmp_path) -> None:
    run_scenario(small_config, 1, tmp_path / "base")
    run_scenario(small_config, 2, tmp_path / "other")
    columns, rows = report([tmp_path / "base", tmp_path / "other"], tmp_path / "out")
    assert columns == ["metric", "base", "other", "delta:other"]
    generated = next(row for row in rows if row["metric"] == "packets.generated")
    assert generated["delta:other"] == relative_delta(generated["other"], generated["base"])
    assert (tmp_path / "out" / "report.csv").exists()


def test_report_rejects_bad_input(small_config, tmp_path) -> None:
    with pytest.raises(NoRunsError):
        report([])
    run_scenario(small_config, 1, tmp_path / "run")
    summary_path = tmp_path / "run" / "summary.json"
    summary = json.loads(summary_path.read_text(encoding="utf-8"))
    summary["schema_version"] = 99
    summary_path.write_text(json.dumps(summary), encoding="utf-8")
    with pytest.raises(SchemaMismatchError) as err:
        report([tmp_path / "run"])
    assert err.value.code == "schema_mismatch"


async def test_sweep_rows_come_back_in_point_order(small_config, tmp_path) -> None:
    with ThreadPoolExecutor(max_workers=2) as pool:
        rows = await async_sweep(
            small_config, "traffic.0.period", [0.2, 0.4], [1, 2], tmp_path, executor=pool
        )
    assert [(row["value"], row["seed"]) for row in rows] == [
        (0.2, 1), (0.2, 2), (0.4, 1), (0.4, 2)
    ]
    assert rows[0]["packets.generated"] > rows[2]["packets.generated"]
    assert (tmp_path / "sweep.csv").exists()
    trend = json.loads((tmp_path / "sweep_trend.json").read_text(encoding="utf-8"))
    assert trend["parameter"] == "traffic.0.period"
    assert (tmp_path / "run_003" / "summary.json").exists()


async def test_sweep_rejects_unknown_parameter(small_config, tmp_path) -> None:
    with pytest.raises(ParameterPathError):
        await async_sweep(small_config, "routing.bogus", [1], [1], tmp_path)


def test_cli_run_and_report(small_config, tmp_path, capsys) -> None:
    scenario = tmp_path / "scenario.json"
    scenario.write_text(json.dumps(small_config), encoding="utf-8")
    out = tmp_path / "run"
    assert main(["run", "--config", str(scenario), "--out", str(out), "--seed", "3"]) == 0
    packets = json.loads(capsys.readouterr().out)
    assert packets["generated"] > 0

    assert main(["report", str(out)]) == 0
    assert capsys.readouterr().out.startswith("metric,run\n")


def test_cli_reports_errors(tmp_path, capsys) -> None:
    assert main(["run", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 1
    assert "error: config:" in capsys.readouterr().err

    assert main(["report", str(tmp_path / "nowhere")]) == 1
    assert "error: io:" in capsys.readouterr().err

    scenario = tmp_path / "scenario.json"
    scenario.write_text(json.dumps({"routing": {"mode": "flooding"}}), encoding="utf-8")
    assert main(["run", "--config", str(scenario), "--out", str(tmp_path / "x")]) == 1
    assert "routing.mode" in capsys.readouterr().err
