"""Speed-maintaining geographic routing and lazy-binding forwarding."""

from __future__ import annotations

import logging
import struct
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, fields
from typing import Any

import numpy as np

from ..channel import Frame
from ..const import ARRIVAL, BROADCAST, DROP_REASON, FRAME_KIND, ROUTING_MODE
from ..helpers import Location, clamp, distance, in_sector
from ..kernel import EventHandle, PeriodicTimer
from ..packet import Destination, Packet
from ._base import BaseNode
from .aggregation import AidaUnit
from .mac import Delivered, MacOutcome

_LOGGER = logging.getLogger(__name__)

# Unit payload: packet id and the hand-over counter at send time.
_TOKEN = struct.Struct(">QI")


@dataclass(frozen=True, slots=True)
class RoutingParams:
    """Speed setpoint, feedback and lazy-binding settings."""

    mode: str = ROUTING_MODE.TABLE_DRIVEN
    speed_setpoint: float = 1000.0
    weight_exponent: float = 2.0
    beacon_period: float = 1.0
    neighbor_timeout: float = 3.0
    min_delay: float = 1e-3
    ttl: int = 32
    sector_half_angle: float = 60.0
    cts_window: float = 0.01
    admission_threshold: float = 0.9
    backpressure_factor: float = 2.0
    miss_alpha: float = 0.1
    greedy: bool = False
    highest_class: int = 2
    reroute_limit: int = 1
    probe_retries: int = 1
    beacon_bytes: int = 32
    probe_bytes: int = 32
    response_bytes: int = 24
    backpressure_bytes: int = 24
    network_header_bytes: int = 16

    def __post_init__(self) -> None:
        if self.mode not in vars(ROUTING_MODE).values():
            raise ValueError(f"unknown routing mode {self.mode}")
        if self.speed_setpoint <= 0:
            raise ValueError("speed setpoint must be positive")
        if self.weight_exponent < 0:
            raise ValueError("weight exponent must be non-negative")
        if not 0 < self.sector_half_angle <= 90:
            raise ValueError("sector half-angle must be within (0, 90]")
        if self.ttl < 1:
            raise ValueError("ttl must be at least 1")
        if self.min_delay <= 0:
            raise ValueError("minimum delay must be positive")

    @classmethod
    def from_config(cls, data: Mapping[str, Any]) -> RoutingParams:
        """Build the parameters from a validated ``routing`` section."""

        return cls(**{f.name: data[f.name] for f in fields(cls) if f.name in data})


@dataclass(slots=True)
class NeighborEntry:
    """Everything a node knows about one neighbor."""

    id: int
    location: Location
    delay: float
    miss_ratio: float
    last_beacon: float
    stale: bool = False


@dataclass(frozen=True, slots=True)
class BeaconBody:
    node: int
    location: Location
    miss_ratio: float


@dataclass(frozen=True, slots=True)
class ProbeBody:
    forwarder: int
    probe_id: int
    origin: Location
    target: Location


@dataclass(frozen=True, slots=True)
class ResponseBody:
    forwarder: int
    probe_id: int
    responder: int
    progress: float


@dataclass(frozen=True, slots=True)
class BackpressureBody:
    node: int
    miss_ratio: float


@dataclass(frozen=True, slots=True)
class RouteDecision:
    """Outcome of a next-hop decision; ``reason`` is set when dropping."""

    next_hop: int | None
    reason: str | None = None
    speed: float | None = None
    met_setpoint: bool = False


@dataclass(slots=True)
class RoutingCounters:
    """Routing activity exported into the run metrics."""

    control_bytes: Counter[str] = field(default_factory=Counter)
    control_frames: Counter[str] = field(default_factory=Counter)
    policed: int = 0
    forwarded: int = 0
    setpoint_met: int = 0
    setpoint_missed: int = 0
    backpressure_received: int = 0
    reroutes: int = 0
    bindings: int = 0
    probe_timeouts: int = 0
    stale_copies: int = 0


@dataclass(slots=True, eq=False)
class _ProbeState:
    probe_id: int
    packet: Packet
    attempts: int = 0
    handle: EventHandle | None = None


@dataclass(slots=True, eq=False)
class _PendingResponse:
    handle: EventHandle
    deadline: float


def candidate_set(
    here: Location, neighbors: Iterable[NeighborEntry], dest: Destination
) -> list[NeighborEntry]:
    """Return the fresh neighbors strictly closer to ``dest``, sorted by id."""

    base = distance(here, dest.center)
    return sorted(
        (
            entry
            for entry in neighbors
            if not entry.stale and base - distance(entry.location, dest.center) > 0
        ),
        key=lambda entry: entry.id,
    )


def relay_speed(
    here: Location, entry: NeighborEntry, dest: Destination, min_delay: float
) -> float:
    """Return the progress per second offered by ``entry``."""

    progress = distance(here, dest.center) - distance(entry.location, dest.center)
    if progress <= 0:
        return 0.0
    return progress / max(entry.delay, min_delay)


def weighted_choice(
    speeds: Sequence[float], exponent: float, rng: np.random.Generator
) -> int:
    """Return an index drawn with probability proportional to ``speed ** exponent``."""

    if len(speeds) == 1:
        return 0
    weights = np.power(np.asarray(speeds, dtype=float), exponent)
    return int(rng.choice(len(speeds), p=weights / weights.sum()))


def encode_token(packet: Packet) -> bytes:
    """Return the unit payload identifying ``packet`` and its current holder."""

    return _TOKEN.pack(packet.id, packet.token)


def decode_token(payload: bytes) -> tuple[int, int]:
    """Return ``(packet_id, token)`` from a unit payload."""

    return _TOKEN.unpack(payload)


class RoutingLayer(BaseNode):
    """Mixin forwarding packets hop by hop toward their destination region."""

    def __init__(self, *args: Any, **kwargs: Any) -> None:
        super().__init__(*args, **kwargs)
        self.neighbors: dict[int, NeighborEntry] = {}
        self.miss_ratio = 0.0
        self.routing_stats = RoutingCounters()
        self._beacon_timer: PeriodicTimer | None = None
        self._probe: _ProbeState | None = None
        self._probe_seq = 0
        self._responses: dict[tuple[int, int], _PendingResponse] = {}
        self._pumping = False

    @property
    def routing(self) -> RoutingParams:
        """Return the routing parameters."""

        return self.params.routing

    # Lifecycle

    def start(self) -> None:
        super().start()
        params = self.routing
        if params.mode == ROUTING_MODE.TABLE_DRIVEN and self._beacon_timer is None:
            phase = params.beacon_period * (self.node_id + 1) / max(1, self.ctx.node_count)
            self._beacon_timer = PeriodicTimer(
                self.sim,
                params.beacon_period,
                self.beacon_tick,
                first_at=self.now + phase,
                node=self.node_id,
                module="routing",
                kind="beacon",
            )

    def _reset_layer(self) -> None:
        super()._reset_layer()
        if self._beacon_timer is not None:
            self._beacon_timer.cancel()
            self._beacon_timer = None
        if self._probe is not None and self._probe.handle is not None:
            self._probe.handle.cancel()
        self._probe = None
        for pending in self._responses.values():
            pending.handle.cancel()
        self._responses.clear()
        self.neighbors.clear()
        self.miss_ratio = 0.0

    def _resume_layer(self) -> None:
        super()._resume_layer()
        self._pump()

    def _queues_empty(self) -> bool:
        return self._probe is None and super()._queues_empty()

    # Neighbor table

    def _send_control_frame(self, kind: str, body: Any, size: int) -> None:
        self.routing_stats.control_bytes[kind] += size
        self.routing_stats.control_frames[kind] += 1
        self.send_control(Frame(self.node_id, BROADCAST, kind, size, payload=body))

    def beacon_tick(self) -> None:
        """Broadcast our id, location estimate and miss ratio."""

        if not self.operational or self.position is None:
            return
        self._evict_stale()
        self._send_control_frame(
            FRAME_KIND.BEACON,
            BeaconBody(self.node_id, self.position, self.miss_ratio),
            self.routing.beacon_bytes,
        )

    def _evict_stale(self) -> None:
        timeout = self.routing.neighbor_timeout
        for neighbor_id in [
            n for n, e in self.neighbors.items() if self.now - e.last_beacon > timeout
        ]:
            del self.neighbors[neighbor_id]

    def _on_beacon(self, body: BeaconBody) -> None:
        if self.routing.mode != ROUTING_MODE.TABLE_DRIVEN:
            return
        floor = self.routing.min_delay
        entry = self.neighbors.get(body.node)
        if entry is None:
            self.neighbors[body.node] = NeighborEntry(
                id=body.node,
                location=body.location,
                delay=max(self.link.delay.get(body.node, floor), floor),
                miss_ratio=body.miss_ratio,
                last_beacon=self.now,
            )
            return
        entry.location = body.location
        entry.miss_ratio = body.miss_ratio
        entry.last_beacon = self.now
        entry.stale = False

    def _on_delay_sample(self, neighbor: int, delay: float) -> None:
        super()._on_delay_sample(neighbor, delay)
        entry = self.neighbors.get(neighbor)
        if entry is not None:
            entry.delay = max(delay, self.routing.min_delay)

    def _on_neighbor_suspected(self, neighbor: int) -> None:
        super()._on_neighbor_suspected(neighbor)
        entry = self.neighbors.get(neighbor)
        if entry is not None:
            entry.stale = True

    def _on_control_frame(self, frame: Frame) -> None:
        super()._on_control_frame(frame)
        body = frame.payload
        if frame.kind == FRAME_KIND.BEACON:
            self._on_beacon(body)
        elif frame.kind == FRAME_KIND.PROBE:
            self._on_probe(body)
        elif frame.kind == FRAME_KIND.RESPONSE:
            self._on_response(body)
        elif frame.kind == FRAME_KIND.BACKPRESSURE:
            self._on_backpressure(body)

    # Table-driven forwarding

    def _record_miss(self, sample: float) -> None:
        alpha = self.routing.miss_alpha
        self.miss_ratio = (1.0 - alpha) * self.miss_ratio + alpha * sample

    def expected_delay(self, dest: Destination) -> float:
        """Return the end-to-end delay implied by the speed setpoint."""

        here = self.position if self.position is not None else self.location
        return distance(here, dest.center) / self.routing.speed_setpoint

    def candidate_set(self, dest: Destination) -> list[NeighborEntry]:
        """Return the neighbors offering positive progress toward ``dest``."""

        if self.position is None:
            return []
        self._evict_stale()
        return candidate_set(self.position, self.neighbors.values(), dest)

    def relay_speed(self, entry: NeighborEntry, dest: Destination) -> float:
        """Return the relay speed of ``entry`` toward ``dest``."""

        if self.position is None:
            return 0.0
        return relay_speed(self.position, entry, dest, self.routing.min_delay)

    def select_next_hop(self, dest: Destination) -> RouteDecision:
        """Pick the next hop toward ``dest`` from the neighbor table."""

        params = self.routing
        candidates = self.candidate_set(dest)
        if not candidates:
            self._record_miss(1.0)
            return RouteDecision(None, DROP_REASON.VOID)
        speeds = [self.relay_speed(entry, dest) for entry in candidates]
        if params.greedy:
            best = int(np.argmax(speeds))
            return RouteDecision(candidates[best].id, speed=speeds[best])
        qualifying = [i for i, speed in enumerate(speeds) if speed >= params.speed_setpoint]
        if qualifying:
            pick = qualifying[
                weighted_choice(
                    [speeds[i] for i in qualifying],
                    params.weight_exponent,
                    self.rng("routing"),
                )
            ]
            self._record_miss(0.0)
            self.routing_stats.setpoint_met += 1
            return RouteDecision(candidates[pick].id, speed=speeds[pick], met_setpoint=True)
        return self.feedback_control(dest, candidates, speeds)

    def feedback_control(
        self,
        dest: Destination,
        candidates: Sequence[NeighborEntry],
        speeds: Sequence[float] | None = None,
    ) -> RouteDecision:
        """Forward below the setpoint or drop with the neighborhood miss ratio."""

        if not candidates:
            self._record_miss(1.0)
            return RouteDecision(None, DROP_REASON.VOID)
        if speeds is None:
            speeds = [self.relay_speed(entry, dest) for entry in candidates]
        self._record_miss(1.0)
        self.routing_stats.setpoint_missed += 1
        drop_probability = clamp(
            sum(entry.miss_ratio for entry in candidates) / len(candidates), 0.0, 1.0
        )
        if self.rng("routing").random() < drop_probability:
            self._send_backpressure()
            return RouteDecision(None, DROP_REASON.CONGESTION_FEEDBACK)
        best = int(np.argmax(speeds))
        return RouteDecision(candidates[best].id, speed=speeds[best])

    def _send_backpressure(self) -> None:
        self._send_control_frame(
            FRAME_KIND.BACKPRESSURE,
            BackpressureBody(self.node_id, self.miss_ratio),
            self.routing.backpressure_bytes,
        )

    def _on_backpressure(self, body: BackpressureBody) -> None:
        params = self.routing
        self.routing_stats.backpressure_received += 1
        value = self.link.inflate(body.node, params.backpressure_factor, params.min_delay)
        entry = self.neighbors.get(body.node)
        if entry is not None:
            entry.delay = max(value, params.min_delay)
            entry.miss_ratio = body.miss_ratio

    def admit_packet(self, packet: Packet) -> bool:
        """Return ``True`` if the source may inject ``packet`` now."""

        params = self.routing
        admitted = (
            self.channel_utilization() < params.admission_threshold
            or packet.priority_class >= params.highest_class
        )
        if not admitted:
            self.routing_stats.policed += 1
        return admitted

    # Packet handling

    def originate(self, packet: Packet) -> None:
        """Inject a packet generated at this node."""

        self.consume_cpu()
        if not self.admit_packet(packet):
            self.ctx.ledger.drop(packet, DROP_REASON.POLICED, self.now)
            return
        self._route_packet(packet)

    def _route_packet(self, packet: Packet) -> None:
        if not self.alive or packet.terminal:
            return
        if packet.dest.contains(self.location):
            self._arrive(packet)
            return
        if packet.ttl_remaining <= 0:
            self._drop_packet(packet, DROP_REASON.TTL_EXHAUSTED)
            return
        if not self.localized:
            self._drop_packet(packet, DROP_REASON.VOID)
            return
        if self.schedule_packet(packet):
            self._pump()

    def _arrive(self, packet: Packet) -> None:
        transport = self.ctx.transport
        if transport is not None and packet.dest.entity is not None:
            verdict = transport.on_region_arrival(packet, self)
            if verdict == ARRIVAL.REBIND:
                self._route_packet(packet)
                return
            if verdict == ARRIVAL.STALE:
                self._drop_packet(packet, DROP_REASON.STALE_BINDING)
                return
        self.ctx.ledger.deliver(packet, self.now)
        if transport is not None:
            transport.on_delivered(packet)

    def _drop_packet(self, packet: Packet, reason: str) -> None:
        if reason == DROP_REASON.EXPIRED:
            self._record_miss(1.0)
        super()._drop_packet(packet, reason)

    def _pump(self) -> None:
        if self._pumping:
            return
        self._pumping = True
        try:
            while self.operational and self.mac_idle and self._probe is None:
                packet = self.next_packet()
                if packet is None:
                    break
                self.consume_cpu()
                if self.routing.mode == ROUTING_MODE.LAZY_BINDING:
                    self.lazy_bind_forward(packet)
                    break
                decision = self.select_next_hop(packet.dest)
                if decision.next_hop is None:
                    self._drop_packet(packet, decision.reason or DROP_REASON.VOID)
                    continue
                self._hand_to_aggregation(packet, decision.next_hop)
        finally:
            self._pumping = False

    def _on_mac_idle(self) -> None:
        super()._on_mac_idle()
        self._pump()

    def _hand_to_aggregation(self, packet: Packet, next_hop: int) -> None:
        params = self.routing
        here = self.position if self.position is not None else self.location
        slack = (
            packet.deadline
            - self.now
            - distance(here, packet.dest.center) / params.speed_setpoint
        )
        self.routing_stats.forwarded += 1
        self.enqueue_unit(
            AidaUnit(
                payload=encode_token(packet),
                size_bytes=params.network_header_bytes + packet.payload_bytes,
                priority_class=packet.priority_class,
                slack=slack,
                next_hop=next_hop,
            )
        )

    def _owned_packet(self, unit: AidaUnit) -> Packet | None:
        packet_id, _ = decode_token(unit.payload)
        packet = self.ctx.ledger.get(packet_id)
        if packet is None or packet.terminal or packet.holder != self.node_id:
            return None
        return packet

    def _on_unit_received(self, unit: AidaUnit, sender: int) -> None:
        super()._on_unit_received(unit, sender)
        try:
            packet_id, token = decode_token(unit.payload)
        except struct.error:
            self.routing_stats.stale_copies += 1
            return
        ledger = self.ctx.ledger
        packet = ledger.get(packet_id)
        if (
            packet is None
            or packet.terminal
            or packet.holder != sender
            or packet.token != token
        ):
            self.routing_stats.stale_copies += 1
            ledger.duplicates += 1
            return
        packet.holder = self.node_id
        packet.hop_trace.append((self.node_id, self.now))
        packet.ttl_remaining -= 1
        self.consume_cpu()
        self._route_packet(packet)

    def _on_unit_dropped(self, unit: AidaUnit, reason: str) -> None:
        super()._on_unit_dropped(unit, reason)
        packet = self._owned_packet(unit)
        if packet is not None:
            self._drop_packet(packet, reason)

    def _on_aggregate_outcome(self, units: list[AidaUnit], outcome: MacOutcome) -> None:
        super()._on_aggregate_outcome(units, outcome)
        if isinstance(outcome, Delivered):
            return
        for unit in units:
            packet = self._owned_packet(unit)
            if packet is not None:
                self._on_hop_failed(packet, unit.next_hop)

    def _on_hop_failed(self, packet: Packet, neighbor: int) -> None:
        entry = self.neighbors.get(neighbor)
        if entry is not None:
            entry.stale = True
        if packet.reroutes < self.routing.reroute_limit:
            packet.reroutes += 1
            self.routing_stats.reroutes += 1
            self._route_packet(packet)
            return
        self._drop_packet(packet, DROP_REASON.MAC_FAILURE)

    # Lazy binding

    def lazy_bind_forward(self, packet: Packet) -> None:
        """Elect the next hop for ``packet`` by receiver contention."""

        self._probe_seq += 1
        self._probe = _ProbeState(self._probe_seq, packet)
        self._send_probe()

    def _send_probe(self) -> None:
        state = self._probe
        if state is None or self.position is None:
            return
        state.attempts += 1
        self._send_control_frame(
            FRAME_KIND.PROBE,
            ProbeBody(self.node_id, state.probe_id, self.position, state.packet.dest.center),
            self.routing.probe_bytes,
        )

    def _on_broadcast_sent(self, frame: Frame) -> None:
        super()._on_broadcast_sent(frame)
        state = self._probe
        if (
            frame.kind != FRAME_KIND.PROBE
            or state is None
            or frame.payload.probe_id != state.probe_id
        ):
            return
        params = self.routing
        wait = (
            params.cts_window
            + self.ctx.channel.radio.airtime(params.response_bytes)
            + 2 * self.params.mac.slot_time
        )
        state.handle = self.schedule_in(
            wait, self._on_probe_timeout, state.probe_id, module="routing",
            kind="probe_timeout",
        )

    def _on_probe_timeout(self, probe_id: int) -> None:
        state = self._probe
        if state is None or state.probe_id != probe_id:
            return
        state.handle = None
        if state.attempts <= self.routing.probe_retries:
            self._send_probe()
            return
        self._probe = None
        self.routing_stats.probe_timeouts += 1
        if not state.packet.terminal and state.packet.holder == self.node_id:
            self._record_miss(1.0)
            self._drop_packet(state.packet, DROP_REASON.VOID)
        self._pump()

    def _on_probe(self, body: ProbeBody) -> None:
        params = self.routing
        if (
            params.mode != ROUTING_MODE.LAZY_BINDING
            or body.forwarder == self.node_id
            or self.position is None
        ):
            return
        here = self.position
        progress = distance(body.origin, body.target) - distance(here, body.target)
        if progress <= 0 or not in_sector(
            body.origin, body.target, here, params.sector_half_angle
        ):
            return
        radio_range = self.ctx.channel.radio.range
        delay = params.cts_window * (1.0 - min(progress, radio_range) / radio_range)
        key = (body.forwarder, body.probe_id)
        previous = self._responses.pop(key, None)
        if previous is not None:
            previous.handle.cancel()
        handle = self.schedule_in(
            delay, self._send_response, key, progress, module="routing", kind="response"
        )
        self._responses[key] = _PendingResponse(handle, self.now + params.cts_window)

    def _send_response(self, key: tuple[int, int], progress: float) -> None:
        pending = self._responses.get(key)
        if pending is None:
            return
        if not self.operational:
            del self._responses[key]
            return
        params = self.routing
        frame = Frame(
            self.node_id,
            BROADCAST,
            FRAME_KIND.RESPONSE,
            params.response_bytes,
            payload=ResponseBody(key[0], key[1], self.node_id, progress),
        )
        if self.transmit_immediately(frame):
            del self._responses[key]
            self.routing_stats.control_bytes[FRAME_KIND.RESPONSE] += params.response_bytes
            self.routing_stats.control_frames[FRAME_KIND.RESPONSE] += 1
            return
        busy_until = self.ctx.channel.busy_until(self.node_id) or self.now
        retry_at = busy_until + self.params.mac.slot_time
        if retry_at > pending.deadline:
            del self._responses[key]
            return
        pending.handle = self.sim.schedule(
            retry_at, self._send_response, key, progress, node=self.node_id,
            module="routing", kind="response",
        )

    def _on_response(self, body: ResponseBody) -> None:
        key = (body.forwarder, body.probe_id)
        pending = self._responses.pop(key, None)
        if pending is not None:
            pending.handle.cancel()
        state = self._probe
        if body.forwarder != self.node_id or state is None or state.probe_id != body.probe_id:
            return
        if state.handle is not None:
            state.handle.cancel()
        self._probe = None
        self.routing_stats.bindings += 1
        packet = state.packet
        if not packet.terminal and packet.holder == self.node_id:
            _LOGGER.debug(
                "t=%.6f node %s bound %s for packet %s",
                self.now, self.node_id, body.responder, packet.id,
            )
            self._hand_to_aggregation(packet, body.responder)
        self._pump()
