"""Unit-disk lossy radio channel with carrier sensing and collisions."""

from __future__ import annotations

import logging
from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, fields
from typing import Any, Protocol

import numpy as np

from .const import BROADCAST, TIME_EPSILON
from .helpers import Location
from .kernel import Simulator

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class RadioModel:
    """Unit-disk radio: range in meters, bitrate in bit/s, per-frame loss."""

    range: float = 40.0
    bitrate: float = 250_000.0
    loss_probability: float = 0.0

    def __post_init__(self) -> None:
        if self.range <= 0:
            raise ValueError("radio range must be positive")
        if self.bitrate <= 0:
            raise ValueError("radio bitrate must be positive")
        if not 0.0 <= self.loss_probability <= 1.0:
            raise ValueError("loss probability must be within [0, 1]")

    @classmethod
    def from_config(cls, data: Mapping[str, Any]) -> RadioModel:
        """Build the model from a validated ``radio`` section."""

        return cls(**{f.name: data[f.name] for f in fields(cls) if f.name in data})

    def airtime(self, size_bytes: int) -> float:
        """Return the seconds needed to send ``size_bytes``."""

        return size_bytes * 8.0 / self.bitrate


@dataclass(slots=True)
class Frame:
    """Link-layer frame; ``payload`` is an aggregate or a control body."""

    src: int
    dst: int
    kind: str
    size_bytes: int
    payload: Any = None
    seq: int = 0
    reliable: bool = False

    @property
    def is_broadcast(self) -> bool:
        """Return ``True`` for frames addressed to every neighbor."""

        return self.dst == BROADCAST


@dataclass(slots=True, eq=False)
class Transmission:
    """One frame on the air."""

    frame: Frame
    start: float
    end: float
    receivers: tuple[int, ...]

    @property
    def sender(self) -> int:
        """Return the transmitting node."""

        return self.frame.src


@dataclass(slots=True)
class ChannelStats:
    """Channel-wide counters exported into the run metrics."""

    frames: Counter[str] = field(default_factory=Counter)
    bytes: Counter[str] = field(default_factory=Counter)
    collisions: int = 0
    losses: int = 0
    receptions: int = 0
    rx_log: list[tuple[float, int, str]] = field(default_factory=list)


class RadioPort(Protocol):
    """What the channel needs from an attached node."""

    node_id: int
    location: Location
    alive: bool
    awake: bool

    def radio_tx(self, active: bool) -> None:
        """Enter or leave the transmit state."""

    def radio_rx(self, active: bool) -> None:
        """Enter or leave one concurrent reception."""

    def observe_busy(self, start: float, end: float) -> None:
        """Record channel airtime heard by the node."""

    def on_frame_received(self, frame: Frame) -> None:
        """Handle an intact frame."""

    def on_transmission_complete(self, tx: Transmission) -> None:
        """Handle the end of the node's own transmission."""


class Channel:
    """Shared medium connecting every node of a scenario."""

    def __init__(
        self, sim: Simulator, radio: RadioModel, *, log_receptions: bool = False
    ) -> None:
        """Initialize an empty channel."""

        self.sim = sim
        self.radio = radio
        self.stats = ChannelStats()
        self._log_receptions = log_receptions
        self._nodes: dict[int, RadioPort] = {}
        self._neighbors: dict[int, tuple[int, ...]] = {}
        self._active: dict[int, Transmission] = {}
        self._recent: list[Transmission] = []
        self._horizon = 0.0

    @property
    def nodes(self) -> Mapping[int, RadioPort]:
        """Return the attached nodes keyed by id."""

        return self._nodes

    def attach(self, nodes: Iterable[RadioPort]) -> None:
        """Attach ``nodes`` and rebuild the neighbor lists."""

        for node in nodes:
            self._nodes[node.node_id] = node
        self.rebuild_neighbors()

    def rebuild_neighbors(self) -> None:
        """Recompute every node's in-range set from true locations."""

        ids = sorted(self._nodes)
        if not ids:
            self._neighbors = {}
            return
        coords = np.array([self._nodes[i].location for i in ids], dtype=float)
        diff = coords[:, None, :] - coords[None, :, :]
        within = np.hypot(diff[..., 0], diff[..., 1]) <= self.radio.range
        np.fill_diagonal(within, False)
        self._neighbors = {
            node_id: tuple(ids[j] for j in np.flatnonzero(within[i]))
            for i, node_id in enumerate(ids)
        }

    def neighbors(self, node_id: int) -> tuple[int, ...]:
        """Return the ids within radio range of ``node_id`` (truth geometry)."""

        return self._neighbors.get(node_id, ())

    def is_transmitting(self, node_id: int) -> bool:
        """Return ``True`` while ``node_id`` has a frame on the air."""

        return node_id in self._active

    def busy_until(self, node_id: int) -> float | None:
        """Return when the medium sensed by ``node_id`` becomes idle.

        ``None`` means the medium is idle now.
        """

        return self._latest_end(node_id, include_starting=True)

    def carrier_sense(self, node_id: int) -> float | None:
        """Return :meth:`busy_until` as seen by a station ending its backoff.

        Frames that start in this same instant are not audible yet, so two
        stations that pick the same slot both transmit.
        """

        return self._latest_end(node_id, include_starting=False)

    def _latest_end(self, node_id: int, *, include_starting: bool) -> float | None:
        latest: float | None = None
        cutoff = self.sim.now - TIME_EPSILON
        audible = self._neighbors.get(node_id, ())
        for sender, tx in self._active.items():
            if sender != node_id and sender not in audible:
                continue
            if sender != node_id and not include_starting and tx.start >= cutoff:
                continue
            if latest is None or tx.end > latest:
                latest = tx.end
        return latest

    def is_busy(self, node_id: int) -> bool:
        """Return ``True`` if ``node_id`` senses a transmission."""

        return self.busy_until(node_id) is not None

    def broadcast_deliver(
        self, sender: int, frame: Frame, *, exclude: Iterable[int] = ()
    ) -> set[int]:
        """Return the nodes that receive ``frame`` from ``sender``.

        Every awake, alive in-range node is a candidate; each candidate not in
        ``exclude`` is independently lost with the radio loss probability.
        """

        excluded = set(exclude)
        rng = self.sim.rng("channel", sender)
        loss = self.radio.loss_probability
        received: set[int] = set()
        for node_id in self._neighbors.get(sender, ()):
            node = self._nodes[node_id]
            if node_id in excluded or not node.alive or not node.awake:
                continue
            if loss > 0.0 and rng.random() < loss:
                self.stats.losses += 1
                continue
            received.add(node_id)
        return received

    def transmit(self, frame: Frame) -> Transmission:
        """Put ``frame`` on the air from ``frame.src`` starting now."""

        now = self.sim.now
        sender = self._nodes[frame.src]
        duration = self.radio.airtime(frame.size_bytes)
        receivers = tuple(
            node_id
            for node_id in self._neighbors.get(frame.src, ())
            if self._nodes[node_id].alive
            and self._nodes[node_id].awake
            and node_id not in self._active
        )
        tx = Transmission(frame, now, now + duration, receivers)
        self._active[frame.src] = tx
        self._horizon = max(self._horizon, 2.0 * duration)
        self.stats.frames[frame.kind] += 1
        self.stats.bytes[frame.kind] += frame.size_bytes

        sender.radio_tx(True)
        sender.observe_busy(tx.start, tx.end)
        for node_id in self._neighbors.get(frame.src, ()):
            node = self._nodes[node_id]
            if node.alive and node.awake:
                node.observe_busy(tx.start, tx.end)
        for node_id in receivers:
            self._nodes[node_id].radio_rx(True)
        self.sim.schedule(
            tx.end, self._end_transmission, tx, node=frame.src, module="channel",
            kind=f"{frame.kind}_end",
        )
        return tx

    def _overlapping(self, tx: Transmission) -> list[Transmission]:
        others = [
            other
            for other in self._active.values()
            if other is not tx and other.start < tx.end
        ]
        others.extend(
            other
            for other in self._recent
            if other is not tx and other.end > tx.start and other.start < tx.end
        )
        return others

    def _end_transmission(self, tx: Transmission) -> None:
        frame = tx.frame
        self._active.pop(frame.src, None)
        self._recent.append(tx)
        cutoff = self.sim.now - self._horizon
        self._recent = [other for other in self._recent if other.end >= cutoff]

        sender = self._nodes[frame.src]
        sender.radio_tx(False)
        for node_id in tx.receivers:
            self._nodes[node_id].radio_rx(False)

        others = self._overlapping(tx)
        collided: set[int] = set()
        for node_id in tx.receivers:
            audible = self._neighbors.get(node_id, ())
            for other in others:
                if other.sender == node_id or other.sender in audible:
                    collided.add(node_id)
                    break
        for node_id in collided:
            if frame.is_broadcast or frame.dst == node_id:
                self.stats.collisions += 1

        pending = set(tx.receivers) - collided
        outside = [n for n in self._neighbors.get(frame.src, ()) if n not in pending]
        received = self.broadcast_deliver(frame.src, frame, exclude=outside)
        for node_id in sorted(received):
            node = self._nodes[node_id]
            self.stats.receptions += 1
            if self._log_receptions:
                self.stats.rx_log.append((self.sim.now, node_id, frame.kind))
            node.on_frame_received(frame)
        sender.on_transmission_complete(tx)
