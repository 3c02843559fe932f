"""Location-addressed packets and the network-wide ownership ledger."""

from __future__ import annotations

import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field

from .const import DROP_REASONS
from .helpers import Location, distance

_LOGGER = logging.getLogger(__name__)

DELIVERED = "delivered"
DROPPED = "dropped"


@dataclass(slots=True)
class Destination:
    """Geographic destination; ``radius`` 0 means point delivery."""

    center: Location
    radius: float = 0.0
    entity: int | None = None

    def __post_init__(self) -> None:
        if self.radius < 0:
            raise ValueError("destination radius must be non-negative")

    def contains(self, location: Location) -> bool:
        """Return ``True`` if ``location`` lies inside the destination region."""

        return distance(location, self.center) <= self.radius


@dataclass(slots=True, eq=False)
class Packet:
    """Application message travelling hop by hop."""

    id: int
    source: int
    source_node: int
    dest: Destination
    deadline: float
    priority_class: int
    payload_bytes: int
    created_at: float
    ttl_remaining: int
    flow: int | None = None
    hop_trace: list[tuple[int, float]] = field(default_factory=list)
    holder: int | None = None
    reroutes: int = 0
    rebinds: int = 0
    binding_version: int | None = None
    connection: tuple[int, int, int] | None = None
    state: str | None = None
    reason: str | None = None
    finished_at: float | None = None

    @property
    def terminal(self) -> bool:
        """Return ``True`` once the packet was delivered or dropped."""

        return self.state is not None

    @property
    def hops(self) -> int:
        """Return the number of forwarding hops taken so far."""

        return max(0, len(self.hop_trace) - 1)

    @property
    def token(self) -> int:
        """Return the hand-over counter used to reject stale copies."""

        return len(self.hop_trace)


@dataclass(slots=True)
class PacketLedger:
    """Every packet created in a run and its terminal state."""

    packets: dict[int, Packet] = field(default_factory=dict)
    dropped: Counter[str] = field(default_factory=Counter)
    delivered: int = 0
    duplicates: int = 0
    _ids: itertools.count = field(default_factory=itertools.count)

    def create(
        self,
        *,
        source: int,
        source_node: int,
        dest: Destination,
        deadline: float,
        priority_class: int,
        payload_bytes: int,
        now: float,
        ttl: int,
        flow: int | None = None,
    ) -> Packet:
        """Create, register and return a packet held by ``source_node``."""

        packet = Packet(
            id=next(self._ids),
            source=source,
            source_node=source_node,
            dest=dest,
            deadline=deadline,
            priority_class=priority_class,
            payload_bytes=payload_bytes,
            created_at=now,
            ttl_remaining=ttl,
            flow=flow,
            hop_trace=[(source_node, now)],
            holder=source_node,
        )
        self.packets[packet.id] = packet
        return packet

    def get(self, packet_id: int) -> Packet | None:
        """Return the packet with ``packet_id`` if it exists."""

        return self.packets.get(packet_id)

    def deliver(self, packet: Packet, now: float) -> None:
        """Mark ``packet`` delivered at ``now``."""

        if packet.terminal:
            return
        packet.state = DELIVERED
        packet.finished_at = now
        packet.holder = None
        self.delivered += 1
        _LOGGER.debug("t=%.6f packet %s delivered after %d hops", now, packet.id, packet.hops)

    def drop(self, packet: Packet, reason: str, now: float) -> None:
        """Mark ``packet`` dropped for ``reason``."""

        if packet.terminal:
            return
        if reason not in DROP_REASONS:
            raise ValueError(f"unknown drop reason {reason}")
        packet.state = DROPPED
        packet.reason = reason
        packet.finished_at = now
        packet.holder = None
        self.dropped[reason] += 1
        _LOGGER.debug("t=%.6f packet %s dropped: %s", now, packet.id, reason)

    @property
    def generated(self) -> int:
        """Return the number of packets ever created."""

        return len(self.packets)

    @property
    def in_flight(self) -> int:
        """Return the number of packets without a terminal state."""

        return self.generated - self.delivered - sum(self.dropped.values())
