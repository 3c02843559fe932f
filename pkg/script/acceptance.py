"""Multi-seed acceptance campaigns for the directional properties of the stack.

Run from the repository root::

    python script/acceptance.py --seeds 10 --out build/acceptance

Every campaign runs paired scenarios (same seed, one parameter changed) on
the reference network and prints one PASS/FAIL line. The exit code is the
number of failed campaigns.
"""

from __future__ import annotations

import argparse
import logging
import statistics
import sys
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

from tqdm import tqdm

from wsnstack.config import reference_scenario, with_parameter
from wsnstack.coordinator import ScenarioCoordinator
from wsnstack.harness import run_scenario, sweep
from wsnstack.helpers import rank_correlation
from wsnstack.metrics import RunMetrics
from wsnstack.topology import build_failure_schedule

_LOGGER = logging.getLogger("acceptance")

# Offered load close to MAC saturation on the reference network.
SATURATED_PERIOD = 0.02


def _saturated(config: Mapping[str, Any]) -> dict[str, Any]:
    for index in range(len(config["traffic"])):
        config = with_parameter(config, f"traffic.{index}.period", SATURATED_PERIOD)
    return config


def _set_deadline(config: Mapping[str, Any], deadline: float) -> dict[str, Any]:
    for index in range(len(config["traffic"])):
        config = with_parameter(config, f"traffic.{index}.deadline", deadline)
    return config


def _paired(
    pool: ProcessPoolExecutor,
    configs: Sequence[Mapping[str, Any]],
    seeds: Sequence[int],
    desc: str,
) -> list[list[RunMetrics]]:
    """Return ``result[i][s]``: config ``i`` run with seed ``s``."""

    futures = [[pool.submit(run_scenario, config, seed) for seed in seeds] for config in configs]
    return [
        [future.result() for future in tqdm(row, desc=desc, disable=None)] for row in futures
    ]


def speed_beats_greedy(pool: ProcessPoolExecutor, seeds: Sequence[int]) -> bool:
    """Speed routing misses fewer deadlines than greedy under congestion."""

    base = _saturated(reference_scenario())
    greedy = with_parameter(base, "routing.greedy", True)
    calibration = _paired(pool, [greedy], seeds, "greedy calibration")[0]
    wins, reductions = 0, []
    for seed, metrics in zip(seeds, calibration):
        p95 = metrics.delay["p95"]
        if p95 is None:
            _LOGGER.warning("Seed %s delivered nothing under greedy routing", seed)
            continue
        deadline = 0.5 * p95
        runs = _paired(
            pool,
            [_set_deadline(greedy, deadline), _set_deadline(base, deadline)],
            [seed],
            f"seed {seed}",
        )
        greedy_miss = runs[0][0].deadline["miss_ratio"]
        speed_miss = runs[1][0].deadline["miss_ratio"]
        if speed_miss < greedy_miss:
            wins += 1
        if greedy_miss > 0:
            reductions.append((greedy_miss - speed_miss) / greedy_miss)
    mean_reduction = statistics.fmean(reductions) if reductions else 0.0
    _LOGGER.info("Speed routing won %d seeds, mean reduction %.3f", wins, mean_reduction)
    return wins >= 0.8 * len(seeds) and mean_reduction >= 0.15


def aggregation_saves_frames(pool: ProcessPoolExecutor, seeds: Sequence[int]) -> bool:
    """Adaptive aggregation cuts MAC frames without hurting the p95 delay."""

    base = _saturated(reference_scenario())
    none, adaptive = _paired(
        pool,
        [base, with_parameter(base, "aggregation.mode", "adaptive")],
        seeds,
        "aggregation",
    )
    good = 0
    violations = 0
    for plain, aggregated in zip(none, adaptive):
        violations += aggregated.aggregation["slack_violations"]
        frames_cut = 1.0 - aggregated.mac["frames_sent"] / max(1, plain.mac["frames_sent"])
        p95_plain, p95_aggr = plain.delay["p95"], aggregated.delay["p95"]
        delay_ok = p95_plain is not None and p95_aggr is not None and p95_aggr <= 1.1 * p95_plain
        if frames_cut >= 0.25 and delay_ok:
            good += 1
    _LOGGER.info("Aggregation good in %d seeds, %d slack violations", good, violations)
    return good >= 0.8 * len(seeds) and violations == 0


def _beacon_oracle(coordinator: ScenarioCoordinator) -> int:
    """Count the beacons each localized node sends until it crashes or the run ends."""

    params = coordinator.params.routing
    count = len(coordinator.nodes)
    crash_at = {
        entry.node: entry.time
        for entry in build_failure_schedule(
            coordinator.config["failures"], count, coordinator.seed
        )
    }
    total = 0
    for node_id, node in coordinator.nodes.items():
        if not node.localized:
            continue
        tick = params.beacon_period * (node_id + 1) / count
        end = crash_at.get(node_id)
        while tick <= coordinator.duration + 1e-9 and (end is None or tick < end):
            total += 1
            tick += params.beacon_period
    return total * params.beacon_bytes


def _crash_run(config: Mapping[str, Any], seed: int) -> tuple[RunMetrics, int]:
    coordinator = ScenarioCoordinator(config, seed)
    metrics = coordinator.run()
    return metrics, _beacon_oracle(coordinator)


def lazy_binding_survives_crashes(pool: ProcessPoolExecutor, seeds: Sequence[int]) -> bool:
    """Lazy binding delivers at least as well as table-driven routing after crashes."""

    base = reference_scenario()
    base = with_parameter(
        base,
        "failures",
        {"schedule": [], "random_crash": {"fraction": 0.1, "time": base["duration"] / 2}},
    )
    lazy = with_parameter(base, "routing.mode", "lazy_binding")
    futures = [(pool.submit(_crash_run, base, s), pool.submit(_crash_run, lazy, s)) for s in seeds]
    wins, overhead_ok = 0, True
    for table_future, lazy_future in tqdm(futures, desc="crashes", disable=None):
        (table_metrics, oracle), (lazy_metrics, _) = table_future.result(), lazy_future.result()
        if lazy_metrics.packets["delivery_ratio"] >= table_metrics.packets["delivery_ratio"]:
            wins += 1
        overhead_ok &= lazy_metrics.control_overhead["bytes"]["beacon"] == 0
        overhead_ok &= table_metrics.control_overhead["bytes"]["beacon"] == oracle
    _LOGGER.info("Lazy binding won %d seeds, overhead exact: %s", wins, overhead_ok)
    return wins >= 0.7 * len(seeds) and overhead_ok


def localization_error_hurts_delivery(
    pool: ProcessPoolExecutor, seeds: Sequence[int], out: Path
) -> bool:
    """Delivery ratio falls as the injected localization error grows."""

    base = with_parameter(reference_scenario(), "localization.method", "injected_error")
    radio_range = base["radio"]["range"]
    sigmas = [radio_range / 2 * step / 4 for step in range(5)]
    rows = sweep(base, "localization.sigma", sigmas, seeds, out / "sigma", executor=pool)
    means = [
        statistics.fmean(r["packets.delivery_ratio"] for r in rows if r["value"] == sigma)
        for sigma in sigmas
    ]
    correlation = rank_correlation(sigmas, means)
    _LOGGER.info("Delivery ratio by sigma %s, rank correlation %s", means, correlation)
    return correlation is not None and correlation <= -0.8


def main(argv: Sequence[str] | None = None) -> int:
    """Run every campaign and return the number of failures."""

    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=10, help="seeds per campaign")
    parser.add_argument("--out", default="build/acceptance", help="sweep output directory")
    parser.add_argument("--workers", type=int, default=None, help="worker processes")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    seeds = list(range(1, args.seeds + 1))
    out = Path(args.out)
    campaigns: list[tuple[str, Callable[[ProcessPoolExecutor], bool]]] = [
        ("speed routing vs greedy", lambda pool: speed_beats_greedy(pool, seeds)),
        ("adaptive aggregation", lambda pool: aggregation_saves_frames(pool, seeds)),
        ("lazy binding under crashes", lambda pool: lazy_binding_survives_crashes(pool, seeds)),
        (
            "localization error sensitivity",
            lambda pool: localization_error_hurts_delivery(pool, seeds, out),
        ),
    ]
    failures = 0
    with ProcessPoolExecutor(max_workers=args.workers) as pool:
        for name, campaign in campaigns:
            passed = campaign(pool)
            failures += not passed
            print(f"{'PASS' if passed else 'FAIL'} {name}")
    return failures


if __name__ == "__main__":
    sys.exit(main())
