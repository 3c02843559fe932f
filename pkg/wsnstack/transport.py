"""Entity endpoints with versioned bindings and in-order connections."""

from __future__ import annotations

import bisect
import logging
from collections import Counter
from collections.abc import Mapping
from dataclasses import dataclass, field, fields
from typing import TYPE_CHECKING, Any

from .const import ARRIVAL, DELIVERY, DIRECTORY_MODE
from .exceptions import UnknownEntityError, UnresolvableDestinationError
from .helpers import Location
from .packet import Destination, Packet, PacketLedger

if TYPE_CHECKING:
    from .stack import SensorNode

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class TransportParams:
    """Binding knowledge and reordering limits."""

    directory: str = DIRECTORY_MODE.REGIONAL
    stale_window: float = 10.0
    rebind_radius: float = 20.0
    rebind_budget: int = 1
    dissemination_delay: float = 0.0
    reorder_capacity: int = 16

    def __post_init__(self) -> None:
        if self.directory not in vars(DIRECTORY_MODE).values():
            raise ValueError(f"unknown directory mode {self.directory}")
        if self.stale_window < 0 or self.dissemination_delay < 0:
            raise ValueError("windows must be non-negative")
        if self.rebind_radius < 0 or self.rebind_budget < 0:
            raise ValueError("rebind radius and budget must be non-negative")
        if self.reorder_capacity < 1:
            raise ValueError("reorder capacity must be at least 1")

    @classmethod
    def from_config(cls, data: Mapping[str, Any]) -> TransportParams:
        """Build the parameters from a validated ``transport`` section."""

        return cls(**{f.name: data[f.name] for f in fields(cls) if f.name in data})


@dataclass(frozen=True, slots=True)
class EntityBinding:
    """Where an entity lived from ``since`` on."""

    entity: int
    node: int
    location: Location
    version: int
    since: float


class EntityDirectory:
    """Every binding ever issued, newest last per entity."""

    def __init__(self) -> None:
        """Initialize an empty directory."""

        self._history: dict[int, list[EntityBinding]] = {}

    def __contains__(self, entity: int) -> bool:
        return entity in self._history

    def register(self, entity: int, node: int, location: Location, now: float) -> EntityBinding:
        """Bind a new entity; registering a known one migrates it."""

        if entity in self._history:
            return self.migrate(entity, node, location, now)
        binding = EntityBinding(entity, node, location, 1, now)
        self._history[entity] = [binding]
        return binding

    def migrate(self, entity: int, node: int, location: Location, now: float) -> EntityBinding:
        """Move ``entity`` to ``node`` under the next version."""

        history = self._history.get(entity)
        if history is None:
            raise UnknownEntityError(entity)
        binding = EntityBinding(entity, node, location, history[-1].version + 1, now)
        history.append(binding)
        return binding

    def lookup(self, entity: int) -> EntityBinding:
        """Return the live binding of ``entity``."""

        history = self._history.get(entity)
        if history is None:
            raise UnknownEntityError(entity)
        return history[-1]

    def version(self, entity: int, version: int) -> EntityBinding | None:
        """Return one binding of ``entity`` by version."""

        history = self._history.get(entity, [])
        if 1 <= version <= len(history):
            return history[version - 1]
        return None

    def known_since(self, entity: int, delay: float, now: float) -> EntityBinding | None:
        """Return the newest binding issued at least ``delay`` seconds ago."""

        for binding in reversed(self._history.get(entity, [])):
            if binding.since + delay <= now:
                return binding
        return None


@dataclass(slots=True)
class Connection:
    """Sequencing state between two entities, kept per direction."""

    endpoints: tuple[int, int]
    capacity: int = 16
    next_send_seq: dict[int, int] = field(default_factory=dict)
    next_expected_seq: dict[int, int] = field(default_factory=dict)
    held: dict[int, dict[int, Packet]] = field(default_factory=dict)
    app_log: dict[int, list[int]] = field(default_factory=dict)
    duplicates: int = 0
    overflow_drops: int = 0
    late: int = 0

    def next_seq(self, sender: int) -> int:
        """Return and consume the next sequence number sent by ``sender``."""

        seq = self.next_send_seq.get(sender, 1)
        self.next_send_seq[sender] = seq + 1
        return seq


def _release(conn: Connection, sender: int) -> None:
    held = conn.held.setdefault(sender, {})
    expected = conn.next_expected_seq.get(sender, 1)
    log = conn.app_log.setdefault(sender, [])
    while expected in held:
        held.pop(expected)
        log.append(expected)
        expected += 1
    conn.next_expected_seq[sender] = expected


def _was_delivered(log: list[int], seq: int) -> bool:
    # The application log is strictly increasing.
    index = bisect.bisect_left(log, seq)
    return index < len(log) and log[index] == seq


def deliver_in_order(conn: Connection, packet: Packet) -> str:
    """Pass ``packet`` to the application exactly once and in order.

    ``packet.connection`` carries ``(sender, receiver, seq)``. When the
    reorder buffer overflows, the held packet with the lowest sequence
    number is dropped and the receiver stops waiting for it and for the
    gap below it. Later arrivals from that gap are discarded as late.
    """

    if packet.connection is None:
        raise ValueError("packet is not part of a connection")
    sender, _, seq = packet.connection
    expected = conn.next_expected_seq.get(sender, 1)
    held = conn.held.setdefault(sender, {})
    log = conn.app_log.setdefault(sender, [])
    if seq in held or (seq < expected and _was_delivered(log, seq)):
        conn.duplicates += 1
        return DELIVERY.DUPLICATE
    if seq < expected:
        conn.late += 1
        return DELIVERY.LATE
    if seq == expected:
        conn.next_expected_seq[sender] = expected + 1
        log.append(seq)
        _release(conn, sender)
        return DELIVERY.DELIVER
    held[seq] = packet
    if len(held) <= conn.capacity:
        return DELIVERY.HOLD
    victim = min(held)
    held.pop(victim)
    conn.overflow_drops += 1
    conn.next_expected_seq[sender] = victim + 1
    released_from = len(log)
    _release(conn, sender)
    if victim == seq:
        return DELIVERY.OVERFLOW
    return DELIVERY.DELIVER if seq in log[released_from:] else DELIVERY.HOLD


@dataclass(slots=True)
class TransportCounters:
    """Transport activity exported into the run metrics."""

    sent: int = 0
    unresolvable: int = 0
    rebinds: int = 0
    stale_binding_drops: int = 0
    migrations: int = 0
    verdicts: Counter[str] = field(default_factory=Counter)


class EntityTransport:
    """Entity-addressed sending on top of location-addressed routing."""

    def __init__(
        self,
        params: TransportParams,
        ledger: PacketLedger,
        nodes: Mapping[int, SensorNode],
    ) -> None:
        """Initialize the transport over the run's nodes."""

        self.params = params
        self.directory = EntityDirectory()
        self.connections: dict[tuple[int, int], Connection] = {}
        self.stats = TransportCounters()
        self._ledger = ledger
        self._nodes = nodes

    def _node_location(self, node_id: int) -> Location:
        node = self._nodes[node_id]
        return node.position if node.position is not None else node.location

    def register(self, entity: int, node_id: int, now: float) -> EntityBinding:
        """Bind ``entity`` to ``node_id`` at the node's estimated location."""

        binding = self.directory.register(entity, node_id, self._node_location(node_id), now)
        _LOGGER.debug("t=%.6f entity %s bound to node %s", now, entity, node_id)
        return binding

    def migrate(self, entity: int, node_id: int, now: float) -> EntityBinding | None:
        """Rebind ``entity`` to ``node_id``; a dead target node is ignored."""

        node = self._nodes[node_id]
        if not node.alive:
            _LOGGER.debug("Skipping migration of entity %s to dead node %s", entity, node_id)
            return None
        binding = self.directory.migrate(entity, node_id, self._node_location(node_id), now)
        self.stats.migrations += 1
        _LOGGER.debug(
            "t=%.6f entity %s migrated to node %s (version %s)",
            now, entity, node_id, binding.version,
        )
        return binding

    def connection(self, a: int, b: int) -> Connection:
        """Return the connection between ``a`` and ``b``, creating it on first use."""

        key = (min(a, b), max(a, b))
        conn = self.connections.get(key)
        if conn is None:
            conn = Connection(key, capacity=self.params.reorder_capacity)
            self.connections[key] = conn
        return conn

    def _source_view(self, entity: int, now: float) -> EntityBinding:
        params = self.params
        if params.directory == DIRECTORY_MODE.ORACLE:
            return self.directory.lookup(entity)
        known = self.directory.known_since(entity, params.dissemination_delay, now)
        if known is None:
            raise UnresolvableDestinationError(entity)
        successor = self.directory.version(entity, known.version + 1)
        if successor is not None and now - successor.since > params.stale_window:
            raise UnresolvableDestinationError(entity)
        return known

    def send_to_entity(
        self,
        src: int,
        dst: int,
        *,
        payload_bytes: int,
        deadline: float,
        priority_class: int,
        now: float,
        ttl: int,
        flow: int | None = None,
    ) -> Packet:
        """Create and inject a packet addressed to ``dst``'s last known location."""

        source = self.directory.lookup(src)
        try:
            target = self._source_view(dst, now)
        except (UnknownEntityError, UnresolvableDestinationError):
            self.stats.unresolvable += 1
            raise
        node = self._nodes[source.node]
        conn = self.connection(src, dst)
        packet = self._ledger.create(
            source=src,
            source_node=source.node,
            dest=Destination(target.location, self.params.rebind_radius, entity=dst),
            deadline=deadline,
            priority_class=priority_class,
            payload_bytes=payload_bytes,
            now=now,
            ttl=ttl,
            flow=flow,
        )
        packet.binding_version = target.version
        packet.connection = (src, dst, conn.next_seq(src))
        self.stats.sent += 1
        node.originate(packet)
        return packet

    def _newer_binding(self, packet: Packet, now: float) -> EntityBinding | None:
        entity = packet.dest.entity
        if entity is None or packet.binding_version is None:
            return None
        params = self.params
        if params.directory == DIRECTORY_MODE.ORACLE:
            current = self.directory.lookup(entity)
            return current if current.version > packet.binding_version else None
        # The old region only learns the binding that replaced its own.
        successor = self.directory.version(entity, packet.binding_version + 1)
        if successor is None:
            return None
        age = now - successor.since
        if age < params.dissemination_delay or age > params.stale_window:
            return None
        return successor

    def on_region_arrival(self, packet: Packet, node: SensorNode) -> str:
        """Decide what ``node`` does with an entity packet inside its region."""

        now = node.now
        current = self.directory.lookup(packet.dest.entity)
        if current.version == packet.binding_version:
            verdict = ARRIVAL.DELIVER
        else:
            newer = self._newer_binding(packet, now)
            if newer is None or packet.rebinds >= self.params.rebind_budget:
                verdict = ARRIVAL.STALE
                self.stats.stale_binding_drops += 1
            else:
                packet.rebinds += 1
                packet.binding_version = newer.version
                packet.dest = Destination(
                    newer.location, self.params.rebind_radius, entity=newer.entity
                )
                self.stats.rebinds += 1
                verdict = ARRIVAL.REBIND
                _LOGGER.debug(
                    "t=%.6f node %s rebound packet %s to version %s",
                    now, node.node_id, packet.id, newer.version,
                )
        self.stats.verdicts[verdict] += 1
        return verdict

    def on_delivered(self, packet: Packet) -> str | None:
        """Run in-order delivery for a packet that reached its entity."""

        if packet.connection is None:
            return None
        sender, receiver, _ = packet.connection
        return deliver_in_order(self.connection(sender, receiver), packet)
