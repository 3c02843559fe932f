"""Velocity-differentiated packet queue."""

from __future__ import annotations

import itertools
import logging
from collections import Counter
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any

from ..const import DROP_REASON
from ..helpers import Location, distance
from ..packet import Packet
from ._base import BaseNode

_LOGGER = logging.getLogger(__name__)

# Required velocity of a packet whose deadline has passed.
EXPIRED = None


@dataclass(frozen=True, slots=True)
class QueueParams:
    """Per-node queue bound; eviction is always lowest (class, velocity) first."""

    capacity: int = 64

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError("queue capacity must be at least 1")

    @classmethod
    def from_config(cls, data: Mapping[str, Any]) -> QueueParams:
        """Build the parameters from a validated ``queue`` section."""

        return cls(capacity=data["capacity"])


def required_velocity(packet: Packet, now: float, here: Location) -> float | None:
    """Return the speed ``packet`` needs from ``here``; ``EXPIRED`` once late."""

    remaining = packet.deadline - now
    if remaining <= 0:
        return EXPIRED
    return distance(here, packet.dest.center) / remaining


@dataclass(slots=True)
class SchedEntry:
    """Queued packet with its scheduling key."""

    packet: Packet
    priority_class: int
    required_velocity: float | None
    enqueue_seq: int

    @property
    def expired(self) -> bool:
        """Return ``True`` if the deadline has passed."""

        return self.required_velocity is EXPIRED

    def rank(self) -> tuple[int, float, int]:
        """Return the key maximized by dequeue and minimized by eviction."""

        return (self.priority_class, self.required_velocity or 0.0, -self.enqueue_seq)


class PacketQueue:
    """Bounded queue ordered by (class, required velocity, FIFO)."""

    def __init__(self, capacity: int) -> None:
        """Initialize an empty queue."""

        self.capacity = capacity
        self._entries: list[SchedEntry] = []
        self._seq = itertools.count()

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> list[SchedEntry]:
        """Return a snapshot of the queued entries."""

        return list(self._entries)

    def make_entry(self, packet: Packet, now: float, here: Location) -> SchedEntry:
        """Build the entry for ``packet`` with the next sequence number."""

        return SchedEntry(
            packet,
            packet.priority_class,
            required_velocity(packet, now, here),
            next(self._seq),
        )

    def refresh(self, now: float, here: Location) -> list[SchedEntry]:
        """Recompute velocities and remove the entries that expired."""

        expired: list[SchedEntry] = []
        kept: list[SchedEntry] = []
        for entry in self._entries:
            entry.required_velocity = required_velocity(entry.packet, now, here)
            (expired if entry.expired else kept).append(entry)
        self._entries = kept
        return expired

    def enqueue(self, entry: SchedEntry) -> SchedEntry | None:
        """Insert ``entry``; return the entry dropped to make room, if any.

        An expired entry is rejected and returned unchanged.
        """

        if entry.expired:
            return entry
        if len(self._entries) < self.capacity:
            self._entries.append(entry)
            return None
        victim = min([*self._entries, entry], key=SchedEntry.rank)
        if victim is not entry:
            self._entries.remove(victim)
            self._entries.append(entry)
        return victim

    def dequeue(self) -> SchedEntry | None:
        """Pop the highest-ranked entry."""

        if not self._entries:
            return None
        best = max(self._entries, key=SchedEntry.rank)
        self._entries.remove(best)
        return best

    def clear(self) -> None:
        """Forget every queued entry."""

        self._entries.clear()


@dataclass(slots=True)
class SchedulerCounters:
    """Deadline misses and congestion drops per priority class."""

    misses: Counter[int] = field(default_factory=Counter)
    drops: Counter[int] = field(default_factory=Counter)
    dequeued: int = 0


class SchedulerLayer(BaseNode):
    """Mixin holding the node's differentiated packet queue."""

    def __init__(self, *args: Any, **kwargs: Any) -> None:
        super().__init__(*args, **kwargs)
        self.queue = PacketQueue(self.params.queue.capacity)
        self.sched_stats = SchedulerCounters()

    def _queues_empty(self) -> bool:
        return len(self.queue) == 0 and super()._queues_empty()

    def _backlog(self) -> int:
        return len(self.queue) + super()._backlog()

    def _reset_layer(self) -> None:
        super()._reset_layer()
        self.queue.clear()

    def schedule_packet(self, packet: Packet) -> bool:
        """Queue ``packet`` for forwarding; return ``False`` if it was dropped."""

        here = self.position if self.position is not None else self.location
        self._drop_expired(here)
        entry = self.queue.make_entry(packet, self.now, here)
        victim = self.queue.enqueue(entry)
        if victim is None:
            return True
        if victim.expired:
            self.sched_stats.misses[victim.priority_class] += 1
            self._drop_packet(victim.packet, DROP_REASON.EXPIRED)
        else:
            self.sched_stats.drops[victim.priority_class] += 1
            self._drop_packet(victim.packet, DROP_REASON.QUEUE_OVERFLOW)
        return victim is not entry

    def next_packet(self) -> Packet | None:
        """Return the next packet to forward, dropping the expired ones."""

        here = self.position if self.position is not None else self.location
        self._drop_expired(here)
        entry = self.queue.dequeue()
        if entry is None:
            return None
        self.sched_stats.dequeued += 1
        return entry.packet

    def _drop_expired(self, here: Location) -> None:
        for entry in self.queue.refresh(self.now, here):
            self.sched_stats.misses[entry.priority_class] += 1
            self._drop_packet(entry.packet, DROP_REASON.EXPIRED)

    def _drop_packet(self, packet: Packet, reason: str) -> None:
        self.ctx.ledger.drop(packet, reason, self.now)
