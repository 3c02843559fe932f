"""Range-free localization from anchor beacons."""

from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, fields
from typing import TYPE_CHECKING, Any

import numpy as np

from .const import LOCALIZATION_METHOD
from .exceptions import NoAnchorsError
from .helpers import Area, Location, distance
from .kernel import make_stream

if TYPE_CHECKING:
    from .channel import Channel
    from .stack import BaseNode

_LOGGER = logging.getLogger(__name__)

# Batches used for the standard error of the Monte-Carlo percentile.
_ERROR_BATCHES = 20


@dataclass(frozen=True, slots=True)
class AnchorBeacon:
    """Position announcement of an anchor; anchors know their true location."""

    anchor_id: int
    anchor_location: Location


@dataclass(frozen=True, slots=True)
class LocationEstimate:
    """A node's belief about its own position."""

    position: Location
    heard_anchors: frozenset[int]
    method: str
    sigma: float | None = None


@dataclass(frozen=True, slots=True)
class LocalizationParams:
    """How non-anchor nodes obtain their estimate."""

    method: str = LOCALIZATION_METHOD.CENTROID
    sigma: float = 0.0
    fallback_sigma: float | None = None
    grid_resolution: float = 2.0
    max_triangles: int = 64

    def __post_init__(self) -> None:
        if self.method not in vars(LOCALIZATION_METHOD).values():
            raise ValueError(f"unknown localization method {self.method}")
        if self.sigma < 0 or (self.fallback_sigma is not None and self.fallback_sigma < 0):
            raise ValueError("sigma must be non-negative")
        if self.grid_resolution <= 0:
            raise ValueError("grid resolution must be positive")

    @classmethod
    def from_config(cls, data: Mapping[str, Any]) -> LocalizationParams:
        """Build the parameters from a validated ``localization`` section."""

        return cls(**{f.name: data[f.name] for f in fields(cls) if f.name in data})


@dataclass(frozen=True, slots=True)
class ErrorBound:
    """Monte-Carlo statistics of the centroid error."""

    mean_error: float
    p95_error: float
    mean_stderr: float
    p95_stderr: float
    expected_anchors: float
    localized_trials: int
    trials: int
    sparse: bool


def centroid_estimate(beacons: Iterable[AnchorBeacon]) -> LocationEstimate:
    """Return the mean position of the heard anchors."""

    heard = list(beacons)
    if not heard:
        raise NoAnchorsError
    coords = np.array([b.anchor_location for b in heard], dtype=float)
    x, y = coords.mean(axis=0)
    return LocationEstimate(
        Location(float(x), float(y)),
        frozenset(b.anchor_id for b in heard),
        LOCALIZATION_METHOD.CENTROID,
    )


def _judged_inside(
    triangle: Sequence[int],
    own: Mapping[int, float],
    neighbor_readings: Iterable[Mapping[int, float]],
) -> bool:
    """Return ``False`` if a neighbor is nearer to, or farther from, all three anchors."""

    mine = [own[a] for a in triangle]
    for reading in neighbor_readings:
        if not all(a in reading for a in triangle):
            continue
        theirs = [reading[a] for a in triangle]
        if all(t < m for t, m in zip(theirs, mine)):
            return False
        if all(t > m for t, m in zip(theirs, mine)):
            return False
    return True


def _inside_triangle(points: np.ndarray, corners: np.ndarray) -> np.ndarray:
    a, b, c = corners

    def side(p: np.ndarray, q: np.ndarray) -> np.ndarray:
        return (q[0] - p[0]) * (points[:, 1] - p[1]) - (q[1] - p[1]) * (points[:, 0] - p[0])

    d1, d2, d3 = side(a, b), side(b, c), side(c, a)
    has_neg = (d1 < 0) | (d2 < 0) | (d3 < 0)
    has_pos = (d1 > 0) | (d2 > 0) | (d3 > 0)
    return ~(has_neg & has_pos)


def area_refine(
    beacons: Sequence[AnchorBeacon],
    own: Mapping[int, float],
    neighbor_readings: Sequence[Mapping[int, float]],
    *,
    area: Area,
    radio_range: float,
    grid_resolution: float,
    max_triangles: int = 64,
) -> LocationEstimate:
    """Refine the centroid with point-in-triangle tests against neighbor readings.

    ``own`` and each neighbor reading map an anchor id to a beacon signal
    proxy where a lower value means the anchor is nearer. Only comparisons
    between readings are used, never their magnitude.
    """

    fallback = centroid_estimate(beacons)
    if len(beacons) < 3:
        return fallback
    located = {b.anchor_id: np.asarray(b.anchor_location, dtype=float) for b in beacons}
    ids = sorted(located)
    coords = np.array([located[a] for a in ids])

    low = np.maximum(coords.min(axis=0) - radio_range, 0.0)
    high = np.minimum(coords.max(axis=0) + radio_range, [area.width, area.height])
    xs = np.arange(low[0] + grid_resolution / 2, high[0], grid_resolution)
    ys = np.arange(low[1] + grid_resolution / 2, high[1], grid_resolution)
    if xs.size == 0 or ys.size == 0:
        return fallback
    gx, gy = np.meshgrid(xs, ys)
    points = np.column_stack((gx.ravel(), gy.ravel()))

    # Every heard anchor is within radio range.
    keep = np.ones(len(points), dtype=bool)
    for corner in coords:
        keep &= np.hypot(points[:, 0] - corner[0], points[:, 1] - corner[1]) <= radio_range

    readings = list(neighbor_readings)
    for triangle in itertools.islice(itertools.combinations(ids, 3), max_triangles):
        corners = np.array([located[a] for a in triangle])
        inside = _inside_triangle(points, corners)
        keep &= inside if _judged_inside(triangle, own, readings) else ~inside
        if not keep.any():
            return fallback

    x, y = points[keep].mean(axis=0)
    return LocationEstimate(
        Location(float(x), float(y)),
        frozenset(ids),
        LOCALIZATION_METHOD.AREA_REFINED,
    )


def inject_error(
    truth: Location, sigma: float, area: Area, rng: np.random.Generator
) -> LocationEstimate:
    """Return ``truth`` displaced by isotropic Gaussian noise, clamped to ``area``."""

    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        position = truth
    else:
        dx, dy = rng.normal(0.0, sigma, size=2)
        position = area.clamp(Location(truth.x + float(dx), truth.y + float(dy)))
    return LocationEstimate(
        position, frozenset(), LOCALIZATION_METHOD.INJECTED_ERROR, sigma=sigma
    )


def error_bound_estimate(
    anchor_density: float, radio_range: float, trials: int, seed: int = 0
) -> ErrorBound:
    """Estimate the centroid error for Poisson-deployed anchors by Monte-Carlo.

    The node sits at the origin; the anchors it hears are a Poisson number of
    points uniform in its radio disk. Trials hearing no anchor are left out of
    the statistics and counted through ``localized_trials``.
    """

    if trials < 1000:
        raise ValueError("at least 1000 trials are required")
    if anchor_density < 0 or radio_range <= 0:
        raise ValueError("density must be non-negative and range positive")
    rng = make_stream(seed, "localization_bound")
    expected = anchor_density * math.pi * radio_range**2
    counts = rng.poisson(expected, size=trials)
    errors: list[float] = []
    for count in counts:
        if count == 0:
            continue
        radius = radio_range * np.sqrt(rng.random(count))
        angle = rng.uniform(0.0, 2.0 * math.pi, size=count)
        cx = float(np.mean(radius * np.cos(angle)))
        cy = float(np.mean(radius * np.sin(angle)))
        errors.append(math.hypot(cx, cy))

    sparse = expected < 1.0
    if not errors:
        return ErrorBound(
            math.nan, math.nan, math.nan, math.nan, expected, 0, trials, sparse
        )
    sample = np.asarray(errors)
    mean_stderr = float(sample.std(ddof=1) / math.sqrt(len(sample))) if len(sample) > 1 else 0.0
    batches = [b for b in np.array_split(sample, _ERROR_BATCHES) if b.size]
    if len(batches) > 1:
        p95s = np.array([np.percentile(b, 95) for b in batches])
        p95_stderr = float(p95s.std(ddof=1) / math.sqrt(len(p95s)))
    else:
        p95_stderr = 0.0
    return ErrorBound(
        mean_error=float(sample.mean()),
        p95_error=float(np.percentile(sample, 95)),
        mean_stderr=mean_stderr,
        p95_stderr=p95_stderr,
        expected_anchors=expected,
        localized_trials=len(sample),
        trials=trials,
        sparse=sparse,
    )


class Localizer:
    """Location service answering every node's estimate from anchor beacons."""

    def __init__(
        self,
        params: LocalizationParams,
        channel: Channel,
        area: Area,
        seed: int,
    ) -> None:
        """Initialize the service; anchors are read from the attached nodes."""

        self.params = params
        self._channel = channel
        self._area = area
        self._seed = seed
        self.failures = 0

    def _anchor_beacons(self, node_id: int) -> list[AnchorBeacon]:
        nodes = self._channel.nodes
        return [
            AnchorBeacon(n, nodes[n].location)
            for n in self._channel.neighbors(node_id)
            if getattr(nodes[n], "is_anchor", False) and nodes[n].alive
        ]

    def _readings(self, node_id: int, anchors: Mapping[int, Location]) -> dict[int, float]:
        # Unit-disk proxy for received signal strength: nearer is stronger.
        here = self._channel.nodes[node_id].location
        heard = set(self._channel.neighbors(node_id))
        return {a: distance(here, loc) for a, loc in anchors.items() if a in heard}

    def __call__(self, node: BaseNode) -> LocationEstimate | None:
        """Return a fresh estimate for ``node``, or ``None`` if it stays unlocalized."""

        params = self.params
        if node.is_anchor or params.method == LOCALIZATION_METHOD.TRUTH:
            return LocationEstimate(node.location, frozenset(), LOCALIZATION_METHOD.TRUTH)
        rng = make_stream(self._seed, "localization", node.node_id)
        if params.method == LOCALIZATION_METHOD.INJECTED_ERROR:
            return inject_error(node.location, params.sigma, self._area, rng)

        beacons = self._anchor_beacons(node.node_id)
        try:
            if params.method == LOCALIZATION_METHOD.AREA_REFINED:
                anchors = {b.anchor_id: b.anchor_location for b in beacons}
                neighbor_readings = [
                    self._readings(n, anchors)
                    for n in self._channel.neighbors(node.node_id)
                ]
                return area_refine(
                    beacons,
                    self._readings(node.node_id, anchors),
                    neighbor_readings,
                    area=self._area,
                    radio_range=self._channel.radio.range,
                    grid_resolution=params.grid_resolution,
                    max_triangles=params.max_triangles,
                )
            return centroid_estimate(beacons)
        except NoAnchorsError:
            self.failures += 1
            if params.fallback_sigma is not None:
                return inject_error(node.location, params.fallback_sigma, self._area, rng)
            _LOGGER.debug("Node %s heard no anchor and stays unlocalized", node.node_id)
            return None
