"""Shared fixtures building small hand-placed scenarios."""

from collections.abc import Callable
from typing import Any

import pytest

from wsnstack.config import validate_config
from wsnstack.coordinator import ScenarioCoordinator

# Five nodes 30 m apart on a horizontal line; with a 40 m range each node
# only hears its direct neighbors.
LINE = [[10.0 + 30.0 * i, 100.0] for i in range(5)]


def build_config(
    positions: list[list[float]],
    *,
    duration: float = 5.0,
    width: float = 200.0,
    height: float = 200.0,
    **sections: Any,
) -> dict[str, Any]:
    """Return a validated scenario over ``positions`` with truth localization."""

    data: dict[str, Any] = {
        "duration": duration,
        "topology": {
            "count": len(positions),
            "width": width,
            "height": height,
            "anchor_fraction": 0.0,
            "positions": positions,
        },
        "localization": {"method": "truth"},
        "outputs": {"timeseries": False},
    }
    for key, value in sections.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    return validate_config(data)


@pytest.fixture
def make_config() -> Callable[..., dict[str, Any]]:
    """Return the scenario builder."""

    return build_config


@pytest.fixture
def make_coordinator() -> Callable[..., ScenarioCoordinator]:
    """Return a builder of coordinators over hand-placed nodes."""

    def _make(positions: list[list[float]], **kwargs: Any) -> ScenarioCoordinator:
        return ScenarioCoordinator(build_config(positions, **kwargs))

    return _make
