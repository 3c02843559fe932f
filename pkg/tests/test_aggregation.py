# pylint: disable=missing-function-docstring,protected-access

"""Tests for application-independent aggregation."""

from types import SimpleNamespace

import numpy as np
import pytest

from wsnstack.channel import Frame
from wsnstack.const import AGGREGATION_MODE, FRAME_KIND
from wsnstack.exceptions import MalformedFrameError
from wsnstack.kernel import make_stream
from wsnstack.stack import AggregationPolicy, AidaFrame, AidaUnit
from wsnstack.stack.aggregation import decode_frame, disaggregate, encode_frame, select_degree
from wsnstack.stack.routing import encode_token

from .conftest import LINE


def _unit(index: int, *, priority: int = 1, slack: float = 1.0, next_hop: int = 1) -> AidaUnit:
    return AidaUnit(
        payload=encode_token(SimpleNamespace(id=index, token=0)),
        size_bytes=48,
        priority_class=priority,
        slack=slack,
        next_hop=next_hop,
    )


def test_random_batches_survive_the_wire_unchanged() -> None:
    rng = make_stream(11, "aggregation_test")
    for _ in range(10_000):
        degree = int(rng.integers(1, 9))
        next_hop = int(rng.integers(0, 100))
        priority = int(rng.integers(0, 3))
        units = [
            AidaUnit(
                payload=rng.bytes(int(rng.integers(0, 40))),
                size_bytes=int(rng.integers(1, 200)),
                priority_class=priority,
                slack=float(rng.uniform(-1.0, 5.0)),
                next_hop=next_hop,
            )
            for _ in range(degree)
        ]
        wire = encode_frame(AidaFrame(units))
        restored = disaggregate(wire)
        assert restored == units
        assert encode_frame(AidaFrame(restored)) == wire


@pytest.mark.parametrize(
    "data",
    [
        b"",
        b"XX\x00\x01",
        b"AF\x00\x00",
        b"AF\x00\x02" + b"\x00" * 8,
    ],
)
def test_malformed_frames_are_rejected(data: bytes) -> None:
    with pytest.raises(MalformedFrameError) as err:
        decode_frame(data)
    assert err.value.code == "malformed_frame"


def test_trailing_bytes_are_rejected() -> None:
    wire = encode_frame(AidaFrame([_unit(1)]))
    with pytest.raises(MalformedFrameError):
        decode_frame(wire + b"\x00")


def test_aggregate_requires_shared_key() -> None:
    with pytest.raises(ValueError):
        AidaFrame([])
    with pytest.raises(ValueError):
        AidaFrame([_unit(1, next_hop=1), _unit(2, next_hop=2)])
    with pytest.raises(ValueError):
        AidaFrame([_unit(1, priority=0), _unit(2, priority=1)])


def test_aggregate_size_counts_one_header() -> None:
    frame = AidaFrame([_unit(1), _unit(2), _unit(3)])
    assert frame.degree == 3
    assert frame.size_bytes(16, 2) == 16 + 3 * 48 + 3 * 2


def test_select_degree_per_mode() -> None:
    none = AggregationPolicy(mode=AGGREGATION_MODE.NONE)
    fixed = AggregationPolicy(mode=AGGREGATION_MODE.FIXED_DEGREE, degree=3)
    on_demand = AggregationPolicy(mode=AGGREGATION_MODE.ON_DEMAND, max_degree=5)
    adaptive = AggregationPolicy(mode=AGGREGATION_MODE.ADAPTIVE, max_degree=4)
    assert select_degree(0.9, 10, none) == 1
    assert select_degree(0.0, 0, fixed) == 3
    assert select_degree(0.5, 3, on_demand) == 3
    assert select_degree(0.5, 30, on_demand) == 5
    assert select_degree(0.5, 0, on_demand) == 1
    assert select_degree(0.8, 10, adaptive, current=2) == 3
    assert select_degree(0.8, 10, adaptive, current=4) == 4
    assert select_degree(0.8, 2, adaptive, current=2) == 2
    assert select_degree(0.2, 10, adaptive, current=3) == 2
    assert select_degree(0.2, 10, adaptive, current=1) == 1
    assert select_degree(0.5, 10, adaptive, current=3) == 3


def test_policy_validation() -> None:
    with pytest.raises(ValueError):
        AggregationPolicy(mode="bogus")
    with pytest.raises(ValueError):
        AggregationPolicy(degree=9, max_degree=8)
    with pytest.raises(ValueError):
        AggregationPolicy(u_low=0.8, u_high=0.7)


def test_overflow_victim_matches_sort_oracle(make_coordinator) -> None:
    capacity = 5
    coordinator = make_coordinator(
        LINE[:2],
        aggregation={
            "mode": "fixed_degree",
            "degree": 8,
            "max_degree": 8,
            "capacity": capacity,
            "flush_timer": 0.5,
            "guard": 0.0,
        },
    )
    node = coordinator.nodes[0]
    rng = np.random.default_rng(5)
    units = [
        _unit(
            i,
            priority=int(rng.integers(0, 3)),
            slack=float(rng.uniform(1.0, 10.0)),
            next_hop=int(rng.integers(1, 3)),
        )
        for i in range(capacity + 1)
    ]
    for unit in units:
        node.enqueue_unit(unit)

    victim = min(units, key=lambda u: (u.priority_class, -u.slack))
    kept = [u for buffered in node._buffers.values() for u in buffered]
    assert len(kept) == capacity
    assert all(u is not victim for u in kept)
    assert node.aida_stats.dropped["queueOverflow"] == 1
    assert node.aida_stats.frames == 0


def test_fixed_degree_flushes_when_full(make_coordinator) -> None:
    coordinator = make_coordinator(
        LINE[:2], aggregation={"mode": "fixed_degree", "degree": 2, "flush_timer": 0.5}
    )
    node = coordinator.nodes[0]
    node.enqueue_unit(_unit(1))
    assert node.aida_stats.frames == 0
    node.enqueue_unit(_unit(2))
    assert node.aida_stats.frames == 1
    assert node.aida_stats.degrees == {2: 1}
    assert node.aida_stats.bytes_saved == coordinator.params.mac.header_bytes
    assert node.buffered_count == 0


def test_flush_timer_releases_partial_aggregate(make_coordinator) -> None:
    coordinator = make_coordinator(
        LINE[:2], aggregation={"mode": "fixed_degree", "degree": 4, "flush_timer": 0.02}
    )
    node = coordinator.nodes[0]
    node.enqueue_unit(_unit(1, slack=1.0))
    coordinator.sim.run(0.019)
    assert node.aida_stats.frames == 0
    coordinator.sim.run(0.021)
    assert node.aida_stats.frames == 1
    assert node.aida_stats.degrees == {1: 1}
    assert node.aida_stats.slack_violations == 0


def test_tight_slack_is_sent_at_once(make_coordinator) -> None:
    coordinator = make_coordinator(
        LINE[:2],
        aggregation={"mode": "fixed_degree", "degree": 4, "flush_timer": 0.5, "guard": 0.01},
    )
    node = coordinator.nodes[0]
    node.enqueue_unit(_unit(1, slack=0.005))
    assert node.aida_stats.frames == 1


def test_units_come_out_in_arrival_order(make_coordinator) -> None:
    coordinator = make_coordinator(
        LINE[:2], aggregation={"mode": "fixed_degree", "degree": 3, "flush_timer": 0.5}
    )
    node = coordinator.nodes[0]
    sent = []
    node._transmit_aggregate = sent.append
    for index in (7, 3, 5):
        node.enqueue_unit(_unit(index))
    assert [u.payload for u in sent[0].units] == [
        encode_token(SimpleNamespace(id=i, token=0)) for i in (7, 3, 5)
    ]


def _through_layer(node, unit, outcomes) -> None:
    del outcomes
    node.enqueue_unit(unit)


def _straight_to_mac(node, unit, outcomes) -> None:
    frame = Frame(
        node.node_id,
        unit.next_hop,
        FRAME_KIND.DATA,
        node.params.mac.header_bytes + unit.size_bytes,
        payload=encode_frame(AidaFrame([unit])),
    )
    node.send_frame(
        frame, node.params.mac.reliable, lambda outcome: outcomes.append((node.now, outcome))
    )


def _unit_send_trace(make_coordinator, submit):
    coordinator = make_coordinator(LINE[:2], aggregation={"mode": "none"})
    sim = coordinator.sim
    sender, receiver = coordinator.nodes[0], coordinator.nodes[1]
    on_air, received, outcomes = [], [], []
    transmit = coordinator.channel.transmit

    def _record(frame):
        on_air.append((sim.now, frame.kind, frame.src, frame.size_bytes))
        return transmit(frame)

    coordinator.channel.transmit = _record
    receiver._on_unit_received = lambda unit, src: received.append((sim.now, src, unit.payload))
    sender._on_aggregate_outcome = lambda units, outcome: outcomes.append((sim.now, outcome))
    for index, at in enumerate((0.0, 0.0002, 0.05)):
        sim.schedule(at, submit, sender, _unit(index), outcomes)
    sim.run(1.0)
    return coordinator, on_air, received, outcomes


def test_no_aggregation_matches_sending_without_the_layer(make_coordinator) -> None:
    coordinator, *through = _unit_send_trace(make_coordinator, _through_layer)
    _, *direct = _unit_send_trace(make_coordinator, _straight_to_mac)

    assert through == direct
    on_air, received, outcomes = through
    header = coordinator.params.mac.header_bytes
    data_sizes = [size for _, kind, _, size in on_air if kind == FRAME_KIND.DATA]
    assert data_sizes == [header + 48] * 3
    assert [payload for _, _, payload in received] == [_unit(i).payload for i in range(3)]
    assert len(outcomes) == 3
    assert coordinator.nodes[0].aida_stats.bytes_saved == 0
