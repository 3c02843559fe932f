# pylint: disable=missing-function-docstring

"""End-to-end runs of complete scenarios."""

import pytest

from wsnstack.config import reference_scenario, with_parameter
from wsnstack.coordinator import ScenarioCoordinator
from wsnstack.harness import run_scenario

from .conftest import LINE

GRID = [[20.0 + 5.0 * i, 20.0 + 5.0 * j] for i in range(7) for j in range(7)]


@pytest.fixture
def short_reference():
    return with_parameter(reference_scenario(), "duration", 8.0)


def test_reference_scenario_is_deterministic(short_reference) -> None:
    first = run_scenario(short_reference, 11)
    second = run_scenario(short_reference, 11)
    assert first.as_dict() == second.as_dict()
    assert first.packets["generated"] > 0
    assert first.conservation_holds


@pytest.mark.parametrize("routing", ["table_driven", "lazy_binding"])
@pytest.mark.parametrize("aggregation", ["none", "fixed_degree", "on_demand", "adaptive"])
def test_packets_are_conserved(short_reference, routing, aggregation) -> None:
    config = with_parameter(short_reference, "routing.mode", routing)
    config = with_parameter(config, "aggregation.mode", aggregation)
    metrics = run_scenario(config, 2)
    assert metrics.conservation_holds
    assert metrics.packets["delivered"] > 0
    assert metrics.aggregation["slack_violations"] == 0


def test_beacons_only_in_table_driven_mode(short_reference) -> None:
    table = run_scenario(short_reference, 3)
    lazy = run_scenario(with_parameter(short_reference, "routing.mode", "lazy_binding"), 3)
    assert table.control_overhead["bytes"]["beacon"] > 0
    assert lazy.control_overhead["bytes"]["beacon"] == 0
    assert lazy.control_overhead["bytes"]["probe"] > 0


def test_duty_cycle_saves_energy_without_waking_sleepers(make_config) -> None:
    base = make_config(GRID, duration=6.0, outputs={"receptions": True})
    cycled = make_config(
        GRID,
        duration=6.0,
        duty_cycle={"enabled": True},
        outputs={"receptions": True},
    )
    awake = run_scenario(base, 4)
    sleepy = run_scenario(cycled, 4)
    assert sleepy.power["sleep_grants"] > 0
    assert sleepy.power["receptions_audited"] > 0
    assert sleepy.power["frames_to_sleeping_nodes"] == 0
    assert sleepy.energy["total"] < awake.energy["total"]


def test_random_crashes_are_counted(short_reference) -> None:
    config = with_parameter(
        short_reference, "failures", {"schedule": [], "random_crash": {"fraction": 0.3, "time": 3.0}}
    )
    metrics = run_scenario(config, 6)
    assert metrics.power["dead_nodes"] == 30
    assert metrics.conservation_holds


def test_entity_flow_reaches_migrated_entity(make_config) -> None:
    config = make_config(
        LINE,
        duration=6.0,
        transport={
            "rebind_radius": 5.0,
            "entities": [{"entity": 1, "node": 0}, {"entity": 2, "node": 4}],
            "migrations": [{"entity": 2, "time": 3.0, "node": 3}],
        },
        traffic=[
            {
                "source_entity": 1,
                "dest_entity": 2,
                "period": 0.25,
                "deadline": 1.0,
                "start": 2.0,
            }
        ],
    )
    coordinator = ScenarioCoordinator(config)
    metrics = coordinator.run()
    assert metrics.transport["sent"] > 0
    assert metrics.transport["migrations"] == 1
    assert metrics.transport["app_delivered"] > 0
    assert metrics.transport["app_duplicates"] == 0
    log = coordinator.transport.connection(1, 2).app_log[1]
    assert log == sorted(log)
    assert metrics.conservation_holds
