# pylint: disable=missing-function-docstring

"""Tests for the velocity-differentiated packet queue."""

import numpy as np
import pytest

from wsnstack.helpers import Location
from wsnstack.packet import Destination, PacketLedger
from wsnstack.stack.scheduler import PacketQueue, QueueParams, required_velocity

from .conftest import LINE

HERE = Location(0.0, 0.0)


def _packet(ledger: PacketLedger, *, x: float, deadline: float, priority: int = 1):
    return ledger.create(
        source=0,
        source_node=0,
        dest=Destination(Location(x, 0.0)),
        deadline=deadline,
        priority_class=priority,
        payload_bytes=32,
        now=0.0,
        ttl=32,
    )


def test_required_velocity() -> None:
    ledger = PacketLedger()
    packet = _packet(ledger, x=100.0, deadline=2.0)
    assert required_velocity(packet, 0.0, HERE) == pytest.approx(50.0)
    assert required_velocity(packet, 1.5, HERE) == pytest.approx(200.0)
    assert required_velocity(packet, 2.0, HERE) is None
    assert required_velocity(packet, 3.0, HERE) is None


def test_queue_params_validation() -> None:
    with pytest.raises(ValueError):
        QueueParams(capacity=0)


def test_drain_order_matches_sorted_snapshot() -> None:
    rng = np.random.default_rng(21)
    for _ in range(1000):
        ledger = PacketLedger()
        queue = PacketQueue(capacity=64)
        now = float(rng.uniform(0.0, 1.0))
        for _ in range(int(rng.integers(1, 20))):
            packet = _packet(
                ledger,
                x=float(rng.uniform(1.0, 300.0)),
                deadline=float(rng.uniform(0.0, 3.0)),
                priority=int(rng.integers(0, 3)),
            )
            queue.enqueue(queue.make_entry(packet, 0.0, HERE))
        queue.refresh(now, HERE)
        snapshot = queue.entries
        assert all(not entry.expired for entry in snapshot)

        expected = [
            entry.packet.id
            for entry in sorted(
                snapshot,
                key=lambda e: (-e.priority_class, -e.required_velocity, e.enqueue_seq),
            )
        ]
        drained = []
        while (entry := queue.dequeue()) is not None:
            drained.append(entry.packet.id)
        assert drained == expected


def test_equal_rank_is_fifo() -> None:
    ledger = PacketLedger()
    queue = PacketQueue(capacity=8)
    packets = [_packet(ledger, x=50.0, deadline=1.0) for _ in range(3)]
    for packet in packets:
        queue.enqueue(queue.make_entry(packet, 0.0, HERE))
    assert [queue.dequeue().packet for _ in range(3)] == packets


def test_overflow_evicts_lowest_rank() -> None:
    rng = np.random.default_rng(8)
    for _ in range(200):
        ledger = PacketLedger()
        queue = PacketQueue(capacity=5)
        entries = []
        for _ in range(6):
            packet = _packet(
                ledger,
                x=float(rng.uniform(1.0, 300.0)),
                deadline=float(rng.uniform(0.5, 3.0)),
                priority=int(rng.integers(0, 3)),
            )
            entry = queue.make_entry(packet, 0.0, HERE)
            entries.append(entry)
            victim = queue.enqueue(entry)
        oracle = min(
            entries, key=lambda e: (e.priority_class, e.required_velocity, -e.enqueue_seq)
        )
        assert victim is oracle
        assert len(queue) == 5
        assert oracle not in queue.entries


def test_expired_entry_is_rejected() -> None:
    ledger = PacketLedger()
    queue = PacketQueue(capacity=4)
    entry = queue.make_entry(_packet(ledger, x=10.0, deadline=1.0), 1.0, HERE)
    assert queue.enqueue(entry) is entry
    assert len(queue) == 0


def test_layer_drops_expired_packets(make_coordinator) -> None:
    coordinator = make_coordinator(LINE[:2])
    node = coordinator.nodes[0]
    packet = _packet(coordinator.ledger, x=100.0, deadline=0.0, priority=2)
    assert node.schedule_packet(packet) is False
    assert node.sched_stats.misses[2] == 1
    assert coordinator.ledger.dropped["expired"] == 1
    assert packet.terminal


def test_layer_drops_on_overflow(make_coordinator) -> None:
    coordinator = make_coordinator(LINE[:2], queue={"capacity": 2})
    node = coordinator.nodes[0]
    low = _packet(coordinator.ledger, x=100.0, deadline=5.0, priority=0)
    high = [_packet(coordinator.ledger, x=100.0, deadline=5.0, priority=2) for _ in range(2)]
    assert node.schedule_packet(low)
    assert node.schedule_packet(high[0])
    assert node.schedule_packet(high[1])
    assert node.sched_stats.drops[0] == 1
    assert coordinator.ledger.dropped["queueOverflow"] == 1
    assert low.reason == "queueOverflow"
    assert node.next_packet() is high[0]
    assert node.next_packet() is high[1]
    assert node.next_packet() is None
    assert node.sched_stats.dequeued == 2
