# pylint: disable=missing-function-docstring

"""Tests for range-free localization."""

import math

import numpy as np
import pytest
from scipy.stats import spearmanr

from wsnstack.const import LOCALIZATION_METHOD
from wsnstack.exceptions import NoAnchorsError
from wsnstack.helpers import Area, Location, distance
from wsnstack.localization import (
    AnchorBeacon,
    LocalizationParams,
    area_refine,
    centroid_estimate,
    error_bound_estimate,
    inject_error,
)

RANGE = 40.0


def _density(expected_anchors: float) -> float:
    return expected_anchors / (math.pi * RANGE**2)


def _oracle_centroid_errors(expected_anchors: float, trials: int, seed: int) -> np.ndarray:
    """Rejection-sample anchors in the square around the disk."""

    rng = np.random.default_rng(seed)
    errors = []
    for count in rng.poisson(expected_anchors, size=trials):
        if count == 0:
            continue
        points = []
        while len(points) < count:
            x, y = rng.uniform(-RANGE, RANGE, size=2)
            if x * x + y * y <= RANGE * RANGE:
                points.append((x, y))
        cx, cy = np.mean(points, axis=0)
        errors.append(math.hypot(cx, cy))
    return np.asarray(errors)


def test_centroid_of_heard_anchors() -> None:
    beacons = [
        AnchorBeacon(1, Location(0.0, 0.0)),
        AnchorBeacon(2, Location(10.0, 0.0)),
        AnchorBeacon(3, Location(0.0, 10.0)),
    ]
    estimate = centroid_estimate(beacons)
    assert estimate.position.x == pytest.approx(10.0 / 3)
    assert estimate.position.y == pytest.approx(10.0 / 3)
    assert estimate.heard_anchors == frozenset({1, 2, 3})
    assert estimate.method == LOCALIZATION_METHOD.CENTROID


def test_centroid_without_anchors_raises() -> None:
    with pytest.raises(NoAnchorsError) as err:
        centroid_estimate([])
    assert err.value.code == "no_anchors"


def test_injected_error_has_requested_spread() -> None:
    rng = np.random.default_rng(2)
    area = Area(1e6, 1e6)
    truth = Location(5e5, 5e5)
    samples = np.array(
        [inject_error(truth, 5.0, area, rng).position for _ in range(50_000)]
    )
    assert samples[:, 0].std() == pytest.approx(5.0, abs=0.1)
    assert samples[:, 1].std() == pytest.approx(5.0, abs=0.1)
    assert samples[:, 0].mean() == pytest.approx(truth.x, abs=0.1)


def test_injected_error_edge_cases() -> None:
    rng = np.random.default_rng(2)
    area = Area(100.0, 100.0)
    truth = Location(1.0, 99.0)
    assert inject_error(truth, 0.0, area, rng).position == truth
    assert all(
        area.contains(inject_error(truth, 50.0, area, rng).position) for _ in range(100)
    )
    with pytest.raises(ValueError):
        inject_error(truth, -1.0, area, rng)


def test_error_bound_agrees_with_rejection_sampling() -> None:
    trials = 20_000
    bound = error_bound_estimate(_density(5.0), RANGE, trials, seed=3)
    oracle = _oracle_centroid_errors(5.0, trials, seed=4)
    assert bound.expected_anchors == pytest.approx(5.0)
    assert bound.mean_error == pytest.approx(oracle.mean(), rel=0.05)
    assert bound.p95_error == pytest.approx(np.percentile(oracle, 95), rel=0.05)
    assert 0 < bound.mean_stderr < 0.05 * bound.mean_error
    assert not bound.sparse


def test_error_bound_shrinks_with_density() -> None:
    levels = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
    means = [error_bound_estimate(_density(n), RANGE, 2000, seed=1).mean_error for n in levels]
    correlation, _ = spearmanr(levels, means)
    assert correlation <= -0.9


def test_error_bound_input_checks() -> None:
    with pytest.raises(ValueError):
        error_bound_estimate(_density(5.0), RANGE, 999)
    sparse = error_bound_estimate(_density(0.5), RANGE, 1000)
    assert sparse.sparse
    assert sparse.localized_trials < sparse.trials
    empty = error_bound_estimate(0.0, RANGE, 1000)
    assert empty.localized_trials == 0
    assert math.isnan(empty.mean_error)


def test_area_refinement_lands_inside_triangle() -> None:
    anchors = {
        1: Location(50.0, 50.0),
        2: Location(80.0, 50.0),
        3: Location(65.0, 50.0 + 15.0 * math.sqrt(3)),
    }
    center = Location(65.0, 50.0 + 5.0 * math.sqrt(3))
    beacons = [AnchorBeacon(a, loc) for a, loc in anchors.items()]

    def reading(point: Location) -> dict[int, float]:
        return {a: distance(point, loc) for a, loc in anchors.items()}

    neighbors = [
        reading(Location(center.x + dx, center.y + dy))
        for dx in np.arange(-10.0, 10.5, 2.0)
        for dy in np.arange(-10.0, 10.5, 2.0)
        if 0 < math.hypot(dx, dy) <= 10.0
    ]
    estimate = area_refine(
        beacons,
        reading(center),
        neighbors,
        area=Area(200.0, 200.0),
        radio_range=RANGE,
        grid_resolution=1.0,
    )
    assert estimate.method == LOCALIZATION_METHOD.AREA_REFINED
    assert distance(estimate.position, center) < 1.0


def test_area_refinement_falls_back_below_three_anchors() -> None:
    beacons = [AnchorBeacon(1, Location(0.0, 0.0)), AnchorBeacon(2, Location(10.0, 0.0))]
    estimate = area_refine(
        beacons, {1: 5.0, 2: 5.0}, [], area=Area(100.0, 100.0), radio_range=RANGE,
        grid_resolution=1.0,
    )
    assert estimate.method == LOCALIZATION_METHOD.CENTROID
    assert estimate.position == Location(5.0, 0.0)


def test_localization_params_validation() -> None:
    with pytest.raises(ValueError):
        LocalizationParams(method="gps")
    with pytest.raises(ValueError):
        LocalizationParams(sigma=-1.0)


@pytest.mark.parametrize(
    ("fallback_sigma", "isolated_method"), [(None, None), (0.0, "injected_error")]
)
def test_localizer_uses_heard_anchors(make_coordinator, fallback_sigma, isolated_method) -> None:
    coordinator = make_coordinator(
        [[50.0, 50.0], [70.0, 50.0], [60.0, 60.0], [190.0, 190.0]],
        localization={"method": "centroid", "fallback_sigma": fallback_sigma},
    )
    nodes = coordinator.nodes
    nodes[0].is_anchor = True
    nodes[1].is_anchor = True
    localizer = coordinator.localizer

    assert localizer(nodes[0]).position == nodes[0].location
    estimate = localizer(nodes[2])
    assert estimate.position == Location(60.0, 50.0)
    assert estimate.heard_anchors == frozenset({0, 1})

    isolated = localizer(nodes[3])
    assert localizer.failures == 1
    if isolated_method is None:
        assert isolated is None
    else:
        assert isolated.method == isolated_method
        assert isolated.position == nodes[3].location
