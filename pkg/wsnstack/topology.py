"""Topology generation and scheduled failure/mobility injection."""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import Any, Protocol

import numpy as np

from .const import FAILURE_KIND
from .exceptions import UnknownNodeError
from .helpers import Area, Location
from .kernel import Simulator, make_stream

_LOGGER = logging.getLogger(__name__)


def generate_topology(
    count: int, area: Area, seed: int
) -> list[tuple[int, Location]]:
    """Place ``count`` nodes uniformly and independently inside ``area``."""

    if count < 1:
        raise ValueError("count must be at least 1")
    if area.width <= 0 or area.height <= 0:
        raise ValueError("area must be non-degenerate")
    rng = make_stream(seed, "topology")
    xs = rng.uniform(0.0, area.width, size=count)
    ys = rng.uniform(0.0, area.height, size=count)
    return [(i, Location(float(x), float(y))) for i, (x, y) in enumerate(zip(xs, ys))]


def choose_anchors(count: int, fraction: float, seed: int) -> frozenset[int]:
    """Return the seeded subset of node ids acting as anchors."""

    anchors = int(round(count * fraction))
    if anchors <= 0:
        return frozenset()
    rng = make_stream(seed, "anchors")
    picked = rng.choice(count, size=min(anchors, count), replace=False)
    return frozenset(int(i) for i in picked)


@dataclass(frozen=True, slots=True)
class FailureEntry:
    """One scheduled crash, forced sleep, recovery or teleport."""

    node: int
    time: float
    kind: str
    location: Location | None = None


class FailureTarget(Protocol):
    """Node operations used by failure injection."""

    node_id: int
    location: Location

    def crash(self) -> None:
        """Stop sending and receiving for good."""

    def force_sleep(self) -> None:
        """Put the node to sleep regardless of coverage."""

    def recover(self) -> None:
        """Bring a crashed or force-slept node back."""

    def move_to(self, location: Location) -> None:
        """Teleport the node."""


def build_failure_schedule(
    data: Mapping[str, Any], node_count: int, seed: int
) -> list[FailureEntry]:
    """Return the validated, time-sorted failure schedule of a scenario."""

    entries: list[FailureEntry] = []
    for index, raw in enumerate(data.get("schedule", [])):
        node = raw["node"]
        if not 0 <= node < node_count:
            raise UnknownNodeError(node, f"failures.schedule.{index}.node")
        location = raw.get("location")
        entries.append(
            FailureEntry(
                node=node,
                time=float(raw["time"]),
                kind=raw["kind"],
                location=Location(*location) if location is not None else None,
            )
        )
    random_crash = data.get("random_crash")
    if random_crash and random_crash.get("fraction", 0.0) > 0.0:
        rng = make_stream(seed, "failures")
        count = int(round(node_count * random_crash["fraction"]))
        victims = sorted(int(i) for i in rng.choice(node_count, size=count, replace=False))
        entries.extend(
            FailureEntry(node=node, time=float(random_crash["time"]), kind=FAILURE_KIND.CRASH)
            for node in victims
        )
    # Stable sort keeps the configured order for simultaneous entries.
    entries.sort(key=lambda entry: entry.time)
    return entries


class FailureInjector:
    """Apply failure entries to nodes at their scheduled times."""

    def __init__(
        self,
        sim: Simulator,
        nodes: Mapping[int, FailureTarget],
    ) -> None:
        """Initialize the injector."""

        self._sim = sim
        self._nodes = nodes
        self.applied: list[FailureEntry] = []

    def schedule(self, entries: Iterable[FailureEntry]) -> None:
        """Queue every entry on the simulator."""

        for entry in entries:
            if entry.node not in self._nodes:
                raise UnknownNodeError(entry.node)
            self._sim.schedule(
                entry.time, self.apply, entry, node=entry.node, module="failure",
                kind=entry.kind,
            )

    def apply(self, entry: FailureEntry) -> None:
        """Apply ``entry`` to its node immediately."""

        node = self._nodes.get(entry.node)
        if node is None:
            raise UnknownNodeError(entry.node)
        _LOGGER.debug("t=%.6f applying %s to node %s", self._sim.now, entry.kind, entry.node)
        if entry.kind == FAILURE_KIND.CRASH:
            node.crash()
        elif entry.kind == FAILURE_KIND.SLEEP_FORCE:
            node.force_sleep()
        elif entry.kind == FAILURE_KIND.RECOVER:
            node.recover()
        elif entry.kind == FAILURE_KIND.MOVE_TO and entry.location is not None:
            node.move_to(entry.location)
        self.applied.append(entry)


def mean_nearest_neighbor_distance(points: Sequence[Location]) -> float:
    """Return the mean distance from each point to its nearest other point."""

    coords = np.asarray(points, dtype=float)
    if len(coords) < 2:
        return 0.0
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(dist, np.inf)
    return float(dist.min(axis=1).mean())
