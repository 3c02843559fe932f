"""Run measurements assembled from the simulated network."""

from __future__ import annotations

import logging
import math
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

from .const import ACTIVITIES, CONTROL_FRAME_KINDS, DROP_REASONS, FRAME_KIND, TIME_EPSILON
from .helpers import distance
from .packet import DELIVERED, Packet

if TYPE_CHECKING:
    from .coordinator import ScenarioCoordinator

_LOGGER = logging.getLogger(__name__)

PACKET_COLUMNS: tuple[str, ...] = (
    "id",
    "flow",
    "source_node",
    "priority_class",
    "created_at",
    "deadline",
    "state",
    "reason",
    "finished_at",
    "delay",
    "hops",
    "reroutes",
    "rebinds",
)

TIMESERIES_COLUMNS: tuple[str, ...] = (
    "time",
    "utilization",
    "energy",
    "generated",
    "delivered",
    "awake_nodes",
)


@dataclass(frozen=True, slots=True)
class TimeSample:
    """Network-wide snapshot taken by the periodic sampler."""

    time: float
    utilization: float
    energy: float
    generated: int
    delivered: int
    awake_nodes: int


@dataclass(slots=True)
class FlowStats:
    """Per-flow generation bookkeeping kept by the traffic generator."""

    skipped: int = 0
    unresolvable: int = 0
    infeasible: int = 0


@dataclass(slots=True)
class RunMetrics:
    """Measurement record of one run."""

    seed: int
    duration: float
    events: int
    packets: dict[str, Any]
    deadline: dict[str, Any]
    delay: dict[str, Any]
    energy: dict[str, Any]
    control_overhead: dict[str, Any]
    mac: dict[str, Any]
    aggregation: dict[str, Any]
    scheduler: dict[str, Any]
    routing: dict[str, Any]
    localization: dict[str, Any]
    power: dict[str, Any]
    transport: dict[str, Any]
    flows: list[dict[str, Any]] = field(default_factory=list)

    def as_dict(self) -> dict[str, Any]:
        """Return the record as plain JSON-ready data."""

        return asdict(self)

    @property
    def conservation_holds(self) -> bool:
        """Return ``True`` if generated = delivered + dropped + in flight."""

        packets = self.packets
        return packets["generated"] == (
            packets["delivered"] + sum(packets["dropped"].values()) + packets["in_flight"]
        )


def ratio(part: float, whole: float) -> float:
    """Return ``part / whole`` clamped to [0, 1]; an empty whole yields 0."""

    if whole <= 0:
        return 0.0
    return min(1.0, max(0.0, part / whole))


def delay_summary(delays: Sequence[float]) -> dict[str, float | None]:
    """Return mean and percentile end-to-end delays."""

    if not delays:
        return dict.fromkeys(("count", "mean", "p50", "p95", "p99"), None) | {"count": 0}
    values = np.asarray(delays, dtype=float)
    p50, p95, p99 = np.percentile(values, [50, 95, 99])
    return {
        "count": len(delays),
        "mean": float(values.mean()),
        "p50": float(p50),
        "p95": float(p95),
        "p99": float(p99),
    }


def on_time(packet: Packet) -> bool:
    """Return ``True`` if ``packet`` was delivered by its deadline."""

    return (
        packet.state == DELIVERED
        and packet.finished_at is not None
        and packet.finished_at <= packet.deadline + TIME_EPSILON
    )


def deadline_summary(packets: Iterable[Packet]) -> dict[str, Any]:
    """Return the deadline miss ratio overall and per priority class.

    Every generated packet that was not delivered by its deadline counts as
    a miss, including packets still in flight when the run ends.
    """

    generated: Counter[int] = Counter()
    met: Counter[int] = Counter()
    for packet in packets:
        generated[packet.priority_class] += 1
        if on_time(packet):
            met[packet.priority_class] += 1
    total = sum(generated.values())
    return {
        "miss_ratio": ratio(total - sum(met.values()), total) if total else 0.0,
        "per_class": {
            str(cls): ratio(generated[cls] - met[cls], generated[cls])
            for cls in sorted(generated)
        },
        "on_time": sum(met.values()),
    }


def packet_row(packet: Packet) -> dict[str, Any]:
    """Return the ``packets.csv`` record of ``packet``."""

    delay = (
        packet.finished_at - packet.created_at
        if packet.state == DELIVERED and packet.finished_at is not None
        else None
    )
    return {
        "id": packet.id,
        "flow": packet.flow,
        "source_node": packet.source_node,
        "priority_class": packet.priority_class,
        "created_at": packet.created_at,
        "deadline": packet.deadline,
        "state": packet.state or "in_flight",
        "reason": packet.reason,
        "finished_at": packet.finished_at,
        "delay": delay,
        "hops": packet.hops,
        "reroutes": packet.reroutes,
        "rebinds": packet.rebinds,
    }


def sleeping_receptions(
    rx_log: Iterable[tuple[float, int, str]],
    sleep_intervals: Mapping[int, Sequence[Sequence[float | None]]],
) -> int:
    """Count logged receptions that fall strictly inside a sleep interval."""

    count = 0
    for time, node, _ in rx_log:
        for start, end in sleep_intervals.get(node, ()):
            if start < time and (end is None or time < end):
                count += 1
                break
    return count


def _localization(coordinator: ScenarioCoordinator) -> dict[str, Any]:
    rows = []
    errors = []
    for node_id, node in sorted(coordinator.nodes.items()):
        estimate = node.estimate
        row: dict[str, Any] = {
            "node": node_id,
            "anchor": node.is_anchor,
            "true_x": node.location.x,
            "true_y": node.location.y,
            "est_x": None,
            "est_y": None,
            "error": None,
            "method": None,
            "anchors_heard": 0,
        }
        if estimate is not None:
            error = distance(node.location, estimate.position)
            row.update(
                est_x=estimate.position.x,
                est_y=estimate.position.y,
                error=error,
                method=estimate.method,
                anchors_heard=len(estimate.heard_anchors),
            )
            if not node.is_anchor:
                errors.append(error)
        rows.append(row)
    values = np.asarray(errors, dtype=float)
    return {
        "method": coordinator.localizer.params.method,
        "anchors": sum(1 for node in coordinator.nodes.values() if node.is_anchor),
        "localized": sum(1 for node in coordinator.nodes.values() if node.localized),
        "unlocalized": sum(1 for node in coordinator.nodes.values() if not node.localized),
        "mean_error": float(values.mean()) if values.size else None,
        "p95_error": float(np.percentile(values, 95)) if values.size else None,
        "max_error": float(values.max()) if values.size else None,
        "nodes": rows,
    }


def collect_metrics(coordinator: ScenarioCoordinator) -> RunMetrics:
    """Assemble the metrics of a finished run."""

    ledger = coordinator.ledger
    nodes = [coordinator.nodes[i] for i in sorted(coordinator.nodes)]
    packets = list(ledger.packets.values())
    channel = coordinator.channel.stats

    delivered = [p for p in packets if p.state == DELIVERED and p.finished_at is not None]
    delivered_bytes = sum(p.payload_bytes for p in delivered)
    per_activity = {a: math.fsum(n.energy.per_activity[a] for n in nodes) for a in ACTIVITIES}
    total_energy = math.fsum(per_activity.values())

    control_bytes: Counter[str] = Counter()
    control_frames: Counter[str] = Counter()
    mac_failed: Counter[str] = Counter()
    degrees: Counter[int] = Counter()
    aida_dropped: Counter[str] = Counter()
    sched_misses: Counter[int] = Counter()
    sched_drops: Counter[int] = Counter()
    routing: Counter[str] = Counter()
    mac: Counter[str] = Counter()
    aida: Counter[str] = Counter()
    for node in nodes:
        control_bytes.update(node.routing_stats.control_bytes)
        control_frames.update(node.routing_stats.control_frames)
        mac_failed.update(node.mac_stats.failed)
        degrees.update(node.aida_stats.degrees)
        aida_dropped.update(node.aida_stats.dropped)
        sched_misses.update(node.sched_stats.misses)
        sched_drops.update(node.sched_stats.drops)
        for name in (
            "policed", "forwarded", "setpoint_met", "setpoint_missed",
            "backpressure_received", "reroutes", "bindings", "probe_timeouts",
            "stale_copies",
        ):
            routing[name] += getattr(node.routing_stats, name)
        for name in (
            "attempts", "retransmissions", "delivered", "acks_sent", "duplicates",
            "suspicions",
        ):
            mac[name] += getattr(node.mac_stats, name)
        for name in ("frames", "units", "bytes_saved", "slack_violations", "malformed"):
            aida[name] += getattr(node.aida_stats, name)

    sleep_intervals = {n.node_id: n.sleep_intervals for n in nodes}
    transport = coordinator.transport
    connections = transport.connections.values()

    return RunMetrics(
        seed=coordinator.seed,
        duration=coordinator.duration,
        events=coordinator.sim.dispatched,
        packets={
            "generated": ledger.generated,
            "delivered": ledger.delivered,
            "dropped": {reason: ledger.dropped.get(reason, 0) for reason in DROP_REASONS},
            "in_flight": ledger.in_flight,
            "delivery_ratio": ratio(ledger.delivered, ledger.generated),
            "duplicates_discarded": ledger.duplicates,
        },
        deadline=deadline_summary(packets),
        delay=delay_summary([p.finished_at - p.created_at for p in delivered]),
        energy={
            "total": total_energy,
            "per_activity": per_activity,
            "per_delivered_byte": total_energy / delivered_bytes if delivered_bytes else None,
            "per_node": [n.energy.consumed for n in nodes],
            "remaining_min": min(n.energy.remaining for n in nodes),
            "exhausted_nodes": sum(1 for n in nodes if n.exhausted),
        },
        control_overhead={
            "bytes": {kind: control_bytes.get(kind, 0) for kind in CONTROL_FRAME_KINDS},
            "frames": {kind: control_frames.get(kind, 0) for kind in CONTROL_FRAME_KINDS},
            "total_bytes": sum(control_bytes.values()),
        },
        mac={
            "frames_sent": sum(channel.frames.values()),
            "data_frames": channel.frames.get(FRAME_KIND.DATA, 0),
            "frames_by_kind": dict(sorted(channel.frames.items())),
            "bytes_by_kind": dict(sorted(channel.bytes.items())),
            "collisions": channel.collisions,
            "losses": channel.losses,
            "receptions": channel.receptions,
            "failed": dict(sorted(mac_failed.items())),
            **dict(sorted(mac.items())),
        },
        aggregation={
            "mode": coordinator.params.aggregation.mode,
            "degree_histogram": {str(k): degrees[k] for k in sorted(degrees)},
            "mean_degree": ratio_or_none(aida["units"], aida["frames"]),
            "dropped": dict(sorted(aida_dropped.items())),
            **dict(sorted(aida.items())),
        },
        scheduler={
            "misses": {str(k): sched_misses[k] for k in sorted(sched_misses)},
            "drops": {str(k): sched_drops[k] for k in sorted(sched_drops)},
        },
        routing={"mode": coordinator.params.routing.mode, **dict(sorted(routing.items()))},
        localization=_localization(coordinator),
        power={
            "duty_cycle": coordinator.params.duty_cycle.enabled,
            "sleep_grants": sum(n.sleep_grants for n in nodes),
            "sleep_denials": sum(n.sleep_denials for n in nodes),
            "sleep_time": math.fsum(
                (end if end is not None else coordinator.duration) - start
                for n in nodes
                for start, end in n.sleep_intervals
            ),
            "frames_to_sleeping_nodes": sleeping_receptions(channel.rx_log, sleep_intervals),
            "receptions_audited": len(channel.rx_log),
            "dead_nodes": sum(1 for n in nodes if not n.alive),
        },
        transport={
            "sent": transport.stats.sent,
            "unresolvable": transport.stats.unresolvable,
            "rebinds": transport.stats.rebinds,
            "stale_binding_drops": transport.stats.stale_binding_drops,
            "migrations": transport.stats.migrations,
            "app_delivered": sum(len(log) for c in connections for log in c.app_log.values()),
            "app_duplicates": sum(c.duplicates for c in connections),
            "reorder_overflows": sum(c.overflow_drops for c in connections),
            "late_discarded": sum(c.late for c in connections),
        },
        flows=_flows(coordinator, packets),
    )


def ratio_or_none(part: float, whole: float) -> float | None:
    """Return ``part / whole`` or ``None`` for an empty whole."""

    return part / whole if whole else None


def _flows(coordinator: ScenarioCoordinator, packets: Sequence[Packet]) -> list[dict[str, Any]]:
    by_flow: dict[int, list[Packet]] = {}
    for packet in packets:
        if packet.flow is not None:
            by_flow.setdefault(packet.flow, []).append(packet)
    rows = []
    for index, stats in enumerate(coordinator.flow_stats):
        flow_packets = by_flow.get(index, [])
        delivered = sum(1 for p in flow_packets if p.state == DELIVERED)
        met = sum(1 for p in flow_packets if on_time(p))
        rows.append(
            {
                "flow": index,
                "generated": len(flow_packets),
                "delivered": delivered,
                "on_time": met,
                "delivery_ratio": ratio(delivered, len(flow_packets)),
                "miss_ratio": ratio(len(flow_packets) - met, len(flow_packets)),
                "skipped": stats.skipped,
                "unresolvable": stats.unresolvable,
                "infeasible_fraction": ratio(stats.infeasible, len(flow_packets)),
            }
        )
    return rows


def timeseries_row(sample: TimeSample) -> dict[str, Any]:
    """Return the ``timeseries.csv`` record of ``sample``."""

    return asdict(sample)


def flatten_metrics(data: Mapping[str, Any], prefix: str = "") -> dict[str, float | int]:
    """Return every numeric scalar of ``data`` keyed by its dotted path.

    Lists (per-node tables, flows) are left out.
    """

    flat: dict[str, float | int] = {}
    for key, value in data.items():
        path = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(flatten_metrics(value, f"{path}."))
        elif isinstance(value, bool):
            flat[path] = int(value)
        elif isinstance(value, (int, float)):
            flat[path] = value
    return flat
