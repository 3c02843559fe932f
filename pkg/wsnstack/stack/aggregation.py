"""Application-independent aggregation of network units into link frames."""

from __future__ import annotations

import logging
import struct
from collections import Counter
from collections.abc import Mapping
from dataclasses import dataclass, field, fields
from functools import partial
from typing import Any

from ..channel import Frame
from ..const import AGGREGATION_MODE, DROP_REASON, FRAME_KIND
from ..exceptions import MalformedFrameError
from ..kernel import EventHandle
from ._base import BaseNode
from .mac import MacOutcome

_LOGGER = logging.getLogger(__name__)

_MAGIC = b"AF"
_FRAME_HEADER = struct.Struct(">2sH")
_UNIT_HEADER = struct.Struct(">IhidH")

# Holding-bound audit tolerance in seconds.
_AUDIT_TOLERANCE = 1e-9

BufferKey = tuple[int, int]


@dataclass(frozen=True, slots=True)
class AggregationPolicy:
    """Degree control settings; ``guard`` ``None`` means twice the mean hop delay."""

    mode: str = AGGREGATION_MODE.NONE
    degree: int = 4
    max_degree: int = 8
    flush_timer: float = 0.02
    guard: float | None = None
    u_low: float = 0.4
    u_high: float = 0.7
    capacity: int = 64
    length_field_bytes: int = 2

    def __post_init__(self) -> None:
        if self.mode not in vars(AGGREGATION_MODE).values():
            raise ValueError(f"unknown aggregation mode {self.mode}")
        if not 1 <= self.degree <= self.max_degree:
            raise ValueError("degree must be within [1, max_degree]")
        if not self.u_low < self.u_high:
            raise ValueError("u_low must be below u_high")
        if self.flush_timer <= 0:
            raise ValueError("flush timer must be positive")
        if self.capacity < 1:
            raise ValueError("buffer capacity must be at least 1")

    @classmethod
    def from_config(cls, data: Mapping[str, Any]) -> AggregationPolicy:
        """Build the policy from a validated ``aggregation`` section."""

        return cls(**{f.name: data[f.name] for f in fields(cls) if f.name in data})


@dataclass(slots=True)
class AidaUnit:
    """Opaque network unit; the payload is carried, never inspected."""

    payload: bytes
    size_bytes: int
    priority_class: int
    slack: float
    next_hop: int
    enqueued_at: float = field(default=0.0, compare=False)
    hold_bound: float = field(default=0.0, compare=False)

    @property
    def key(self) -> BufferKey:
        """Return the buffer this unit belongs to."""

        return (self.next_hop, self.priority_class)


@dataclass(slots=True)
class AidaFrame:
    """Ordered units sharing one next hop and one priority class."""

    units: list[AidaUnit]

    def __post_init__(self) -> None:
        if not self.units:
            raise ValueError("an aggregate carries at least one unit")
        keys = {unit.key for unit in self.units}
        if len(keys) != 1:
            raise ValueError("aggregated units must share next hop and priority class")

    @property
    def degree(self) -> int:
        """Return the number of units carried."""

        return len(self.units)

    @property
    def next_hop(self) -> int:
        """Return the shared next hop."""

        return self.units[0].next_hop

    @property
    def priority_class(self) -> int:
        """Return the shared priority class."""

        return self.units[0].priority_class

    def size_bytes(self, header_bytes: int, length_field_bytes: int = 2) -> int:
        """Return the on-air size of the frame."""

        return (
            header_bytes
            + sum(unit.size_bytes for unit in self.units)
            + length_field_bytes * self.degree
        )


def encode_frame(frame: AidaFrame) -> bytes:
    """Serialize ``frame`` into its wire format."""

    parts = [_FRAME_HEADER.pack(_MAGIC, frame.degree)]
    for unit in frame.units:
        parts.append(
            _UNIT_HEADER.pack(
                unit.size_bytes, unit.priority_class, unit.next_hop, unit.slack,
                len(unit.payload),
            )
        )
        parts.append(unit.payload)
    return b"".join(parts)


def decode_frame(data: bytes) -> AidaFrame:
    """Parse the wire format back into an :class:`AidaFrame`."""

    if len(data) < _FRAME_HEADER.size:
        raise MalformedFrameError("truncated frame header")
    magic, count = _FRAME_HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise MalformedFrameError("bad magic")
    if count < 1:
        raise MalformedFrameError("empty aggregate")
    offset = _FRAME_HEADER.size
    units: list[AidaUnit] = []
    for _ in range(count):
        if offset + _UNIT_HEADER.size > len(data):
            raise MalformedFrameError("truncated unit header")
        size, priority, next_hop, slack, length = _UNIT_HEADER.unpack_from(data, offset)
        offset += _UNIT_HEADER.size
        if offset + length > len(data):
            raise MalformedFrameError("truncated unit payload")
        units.append(
            AidaUnit(bytes(data[offset : offset + length]), size, priority, slack, next_hop)
        )
        offset += length
    if offset != len(data):
        raise MalformedFrameError("trailing bytes")
    try:
        return AidaFrame(units)
    except ValueError as err:
        raise MalformedFrameError(str(err)) from err


def disaggregate(frame: AidaFrame | bytes) -> list[AidaUnit]:
    """Return the units of ``frame`` in their original order."""

    if isinstance(frame, (bytes, bytearray, memoryview)):
        frame = decode_frame(bytes(frame))
    return list(frame.units)


def select_degree(
    u: float, q: int, policy: AggregationPolicy, current: int = 1
) -> int:
    """Return the target aggregation degree for utilization ``u`` and backlog ``q``."""

    if policy.mode == AGGREGATION_MODE.NONE:
        return 1
    if policy.mode == AGGREGATION_MODE.FIXED_DEGREE:
        return policy.degree
    if policy.mode == AGGREGATION_MODE.ON_DEMAND:
        return max(1, min(q, policy.max_degree))
    if u >= policy.u_high:
        return max(1, min(current + 1, policy.max_degree, q))
    if u <= policy.u_low:
        return max(current - 1, 1)
    return current


@dataclass(slots=True)
class AggregationCounters:
    """Aggregation activity exported into the run metrics."""

    frames: int = 0
    units: int = 0
    degrees: Counter[int] = field(default_factory=Counter)
    dropped: Counter[str] = field(default_factory=Counter)
    bytes_saved: int = 0
    slack_violations: int = 0
    malformed: int = 0


class AggregationLayer(BaseNode):
    """Mixin buffering units per (next hop, class) and flushing aggregates."""

    def __init__(self, *args: Any, **kwargs: Any) -> None:
        super().__init__(*args, **kwargs)
        self._buffers: dict[BufferKey, list[AidaUnit]] = {}
        self._flush_handles: dict[BufferKey, EventHandle] = {}
        self._target_degree = 1
        self.aida_stats = AggregationCounters()

    @property
    def buffered_count(self) -> int:
        """Return the number of units waiting in all buffers."""

        return sum(len(units) for units in self._buffers.values())

    @property
    def target_degree(self) -> int:
        """Return the degree the adaptive controller currently aims for."""

        return self._target_degree

    def _queues_empty(self) -> bool:
        return self.buffered_count == 0 and super()._queues_empty()

    def _reset_layer(self) -> None:
        super()._reset_layer()
        for handle in self._flush_handles.values():
            handle.cancel()
        self._flush_handles.clear()
        self._buffers.clear()
        self._target_degree = 1

    def slack_guard(self) -> float:
        """Return the slack kept in reserve when holding units."""

        policy = self.params.aggregation
        if policy.guard is not None:
            return policy.guard
        mean = self.link.mean_delay()
        if mean is None:
            mean = self.params.routing.min_delay
        return 2.0 * mean

    def _holding_bound(self, unit: AidaUnit, guard: float) -> float:
        return max(0.0, min(self.params.aggregation.flush_timer, unit.slack - guard))

    def _update_target(self) -> int:
        policy = self.params.aggregation
        queued = self.buffered_count + self._backlog()
        self._target_degree = select_degree(
            self.channel_utilization(), queued, policy, self._target_degree
        )
        return self._target_degree

    def enqueue_unit(self, unit: AidaUnit) -> None:
        """Buffer ``unit`` and flush when a trigger fires."""

        policy = self.params.aggregation
        unit.enqueued_at = self.now
        unit.hold_bound = self._holding_bound(unit, self.slack_guard())
        if self.buffered_count >= policy.capacity:
            victim = min(
                [u for units in self._buffers.values() for u in units] + [unit],
                key=lambda u: (u.priority_class, -u.slack, -u.enqueued_at),
            )
            self.aida_stats.dropped[DROP_REASON.QUEUE_OVERFLOW] += 1
            if victim is unit:
                self._on_unit_dropped(unit, DROP_REASON.QUEUE_OVERFLOW)
                return
            self._buffers[victim.key].remove(victim)
            self._on_unit_dropped(victim, DROP_REASON.QUEUE_OVERFLOW)
        self._buffers.setdefault(unit.key, []).append(unit)
        target = self._update_target()
        if policy.mode == AGGREGATION_MODE.NONE or len(self._buffers[unit.key]) >= target:
            self.flush(unit.key)
            return
        self._arm_flush(unit.key)

    def _deadline(self, key: BufferKey) -> float | None:
        units = self._buffers.get(key)
        if not units:
            return None
        return min(u.enqueued_at + u.hold_bound for u in units)

    def _arm_flush(self, key: BufferKey) -> None:
        deadline = self._deadline(key)
        handle = self._flush_handles.get(key)
        if deadline is None:
            if handle is not None:
                handle.cancel()
                del self._flush_handles[key]
            return
        if deadline <= self.now:
            self.flush(key)
            return
        if handle is not None:
            if handle.time <= deadline:
                return
            handle.cancel()
        self._flush_handles[key] = self.sim.schedule(
            deadline, self._on_flush_timer, key, node=self.node_id,
            module="aggregation", kind="flush_timer",
        )

    def _on_flush_timer(self, key: BufferKey) -> None:
        self._flush_handles.pop(key, None)
        if self._buffers.get(key) and self.alive:
            self.flush(key)

    def flush(self, key: BufferKey) -> AidaFrame | None:
        """Emit the oldest buffered units of ``key`` as one aggregate."""

        units = self._buffers.get(key)
        if not units:
            return None
        policy = self.params.aggregation
        count = min(len(units), max(1, self._target_degree), policy.max_degree)
        if policy.mode == AGGREGATION_MODE.NONE:
            count = 1
        emitted = units[:count]
        del units[:count]
        if not units:
            del self._buffers[key]

        for unit in emitted:
            if self.now - unit.enqueued_at > unit.hold_bound + _AUDIT_TOLERANCE:
                self.aida_stats.slack_violations += 1
        frame = AidaFrame(emitted)
        self._transmit_aggregate(frame)

        handle = self._flush_handles.pop(key, None)
        if handle is not None:
            handle.cancel()
        if key in self._buffers:
            self._arm_flush(key)
        return frame

    def _transmit_aggregate(self, frame: AidaFrame) -> None:
        policy = self.params.aggregation
        header = self.params.mac.header_bytes
        stats = self.aida_stats
        stats.frames += 1
        stats.units += frame.degree
        stats.degrees[frame.degree] += 1
        stats.bytes_saved += (frame.degree - 1) * header
        if _LOGGER.isEnabledFor(logging.DEBUG):
            _LOGGER.debug(
                "t=%.6f node %s flushes degree %d to %s",
                self.now, self.node_id, frame.degree, frame.next_hop,
            )
        # Without aggregation a unit goes out exactly as it would without this layer.
        length_field = 0 if policy.mode == AGGREGATION_MODE.NONE else policy.length_field_bytes
        mac_frame = Frame(
            self.node_id,
            frame.next_hop,
            FRAME_KIND.DATA,
            frame.size_bytes(header, length_field),
            payload=encode_frame(frame),
        )
        self.send_frame(
            mac_frame,
            self.params.mac.reliable,
            partial(self._on_aggregate_sent, frame.units),
        )

    def _on_aggregate_sent(self, units: list[AidaUnit], outcome: MacOutcome) -> None:
        self._on_aggregate_outcome(units, outcome)

    def _on_data_frame(self, frame: Frame) -> None:
        try:
            units = disaggregate(frame.payload)
        except MalformedFrameError as err:
            self.aida_stats.malformed += 1
            _LOGGER.debug("node %s dropped aggregate from %s: %s", self.node_id, frame.src, err)
            return
        for unit in units:
            self._on_unit_received(unit, frame.src)

