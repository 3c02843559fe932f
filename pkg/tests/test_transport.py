# pylint: disable=missing-function-docstring

"""Tests for entity bindings and in-order connections."""

from types import SimpleNamespace
from unittest.mock import MagicMock

import numpy as np
import pytest

from wsnstack.const import ARRIVAL, DELIVERY, DIRECTORY_MODE
from wsnstack.exceptions import UnknownEntityError, UnresolvableDestinationError
from wsnstack.helpers import Location
from wsnstack.packet import PacketLedger
from wsnstack.transport import (
    Connection,
    EntityDirectory,
    EntityTransport,
    TransportParams,
    deliver_in_order,
)

from .conftest import LINE


def _arrival(conn: Connection, seq: int) -> str:
    return deliver_in_order(conn, SimpleNamespace(connection=(0, 1, seq)))


def _transport(**params) -> EntityTransport:
    nodes = {
        0: MagicMock(position=Location(10.0, 10.0), alive=True),
        1: MagicMock(position=Location(90.0, 10.0), alive=True),
        2: MagicMock(position=Location(90.0, 90.0), alive=True),
        3: MagicMock(position=None, location=Location(50.0, 50.0), alive=False),
    }
    transport = EntityTransport(TransportParams(**params), PacketLedger(), nodes)
    transport.register(1, 0, 0.0)
    transport.register(2, 1, 0.0)
    return transport


def _send(transport: EntityTransport, now: float):
    return transport.send_to_entity(
        1, 2, payload_bytes=16, deadline=now + 1.0, priority_class=1, now=now, ttl=32
    )


def test_permuted_arrivals_reach_app_in_order() -> None:
    conn = Connection((0, 1), capacity=100)
    order = np.random.default_rng(6).permutation(np.arange(1, 101))
    verdicts = [_arrival(conn, int(seq)) for seq in order]
    assert conn.app_log[0] == list(range(1, 101))
    assert verdicts.count(DELIVERY.HOLD) + verdicts.count(DELIVERY.DELIVER) == 100
    assert _arrival(conn, 50) == DELIVERY.DUPLICATE
    assert conn.duplicates == 1


def test_held_duplicate_is_discarded() -> None:
    conn = Connection((0, 1), capacity=4)
    assert _arrival(conn, 3) == DELIVERY.HOLD
    assert _arrival(conn, 3) == DELIVERY.DUPLICATE
    assert _arrival(conn, 1) == DELIVERY.DELIVER
    assert _arrival(conn, 2) == DELIVERY.DELIVER
    assert conn.app_log[0] == [1, 2, 3]


def test_overflow_gives_up_on_the_gap() -> None:
    conn = Connection((0, 1), capacity=2)
    assert _arrival(conn, 3) == DELIVERY.HOLD
    assert _arrival(conn, 4) == DELIVERY.HOLD
    assert _arrival(conn, 5) == DELIVERY.DELIVER
    assert conn.app_log[0] == [4, 5]
    assert conn.overflow_drops == 1
    assert conn.next_expected_seq[0] == 6


def test_overflow_drops_only_the_lowest_held_packet() -> None:
    conn = Connection((0, 1), capacity=2)
    assert _arrival(conn, 10) == DELIVERY.HOLD
    assert _arrival(conn, 3) == DELIVERY.HOLD
    assert _arrival(conn, 4) == DELIVERY.DELIVER
    assert conn.overflow_drops == 1
    assert conn.app_log[0] == [4]
    assert list(conn.held[0]) == [10]
    assert conn.next_expected_seq[0] == 5

    assert _arrival(conn, 1) == DELIVERY.LATE
    assert _arrival(conn, 3) == DELIVERY.LATE
    assert _arrival(conn, 4) == DELIVERY.DUPLICATE
    assert _arrival(conn, 5) == DELIVERY.DELIVER
    assert conn.app_log[0] == [4, 5]
    assert (conn.late, conn.duplicates, conn.overflow_drops) == (2, 1, 1)


def test_overflow_can_drop_the_new_arrival() -> None:
    conn = Connection((0, 1), capacity=1)
    assert _arrival(conn, 5) == DELIVERY.HOLD
    assert _arrival(conn, 3) == DELIVERY.OVERFLOW
    assert conn.overflow_drops == 1
    assert list(conn.held[0]) == [5]
    assert conn.next_expected_seq[0] == 4
    assert _arrival(conn, 4) == DELIVERY.DELIVER
    assert conn.app_log[0] == [4, 5]
    assert conn.held[0] == {}


def test_connection_sequences_per_direction() -> None:
    conn = Connection((1, 2))
    assert [conn.next_seq(1), conn.next_seq(1), conn.next_seq(2)] == [1, 2, 1]


def test_directory_versions() -> None:
    directory = EntityDirectory()
    directory.register(7, 0, Location(0.0, 0.0), 0.0)
    moved = directory.migrate(7, 3, Location(5.0, 5.0), 4.0)
    assert 7 in directory
    assert moved.version == 2
    assert directory.lookup(7) == moved
    assert directory.version(7, 1).node == 0
    assert directory.version(7, 3) is None
    assert directory.known_since(7, 1.0, 4.5).version == 1
    assert directory.known_since(7, 1.0, 5.0).version == 2
    assert directory.known_since(7, 1.0, 0.5) is None
    with pytest.raises(UnknownEntityError):
        directory.migrate(8, 0, Location(0.0, 0.0), 1.0)
    with pytest.raises(UnknownEntityError):
        directory.lookup(8)


def test_send_targets_last_known_location() -> None:
    transport = _transport()
    packet = _send(transport, 1.0)
    assert packet.dest.center == Location(90.0, 10.0)
    assert packet.dest.entity == 2
    assert packet.binding_version == 1
    assert packet.connection == (1, 2, 1)
    assert _send(transport, 1.5).connection == (1, 2, 2)
    transport._nodes[0].originate.assert_called()  # pylint: disable=protected-access
    assert transport.stats.sent == 2


def test_binding_is_unresolvable_before_dissemination() -> None:
    transport = _transport(dissemination_delay=1.0)
    with pytest.raises(UnresolvableDestinationError):
        _send(transport, 0.5)
    assert transport.stats.unresolvable == 1
    assert _send(transport, 1.0).binding_version == 1


def test_binding_is_unresolvable_past_the_stale_window() -> None:
    transport = _transport(dissemination_delay=1.0, stale_window=0.2)
    transport.migrate(2, 2, 9.5)
    with pytest.raises(UnresolvableDestinationError):
        _send(transport, 10.0)
    assert _send(transport, 10.5).binding_version == 2


def test_oracle_directory_sees_migrations_at_once() -> None:
    transport = _transport(directory=DIRECTORY_MODE.ORACLE, dissemination_delay=5.0)
    transport.migrate(2, 2, 1.0)
    assert _send(transport, 1.0).dest.center == Location(90.0, 90.0)


def test_migration_to_dead_node_is_skipped() -> None:
    transport = _transport()
    assert transport.migrate(2, 3, 1.0) is None
    assert transport.directory.lookup(2).node == 1
    assert transport.stats.migrations == 0


def test_region_arrival_verdicts() -> None:
    transport = _transport(rebind_budget=1)
    node = SimpleNamespace(now=2.0, node_id=1)
    fresh = _send(transport, 1.0)
    assert transport.on_region_arrival(fresh, node) == ARRIVAL.DELIVER

    transport.migrate(2, 2, 1.5)
    assert transport.on_region_arrival(fresh, node) == ARRIVAL.REBIND
    assert fresh.dest.center == Location(90.0, 90.0)
    assert fresh.binding_version == 2
    assert fresh.rebinds == 1

    transport.migrate(2, 0, 1.8)
    assert transport.on_region_arrival(fresh, node) == ARRIVAL.STALE
    assert transport.stats.stale_binding_drops == 1
    assert transport.stats.verdicts == {
        ARRIVAL.DELIVER: 1, ARRIVAL.REBIND: 1, ARRIVAL.STALE: 1
    }


def test_old_region_only_knows_its_successor_for_a_while() -> None:
    transport = _transport(stale_window=1.0)
    packet = _send(transport, 0.5)
    transport.migrate(2, 2, 1.0)
    late = SimpleNamespace(now=3.0, node_id=1)
    assert transport.on_region_arrival(packet, late) == ARRIVAL.STALE


def test_packet_follows_a_migrated_entity(make_coordinator) -> None:
    coordinator = make_coordinator(
        LINE,
        duration=10.0,
        transport={
            "rebind_radius": 5.0,
            "entities": [{"entity": 1, "node": 0}, {"entity": 2, "node": 4}],
        },
    )
    coordinator.start()
    coordinator.sim.run(3.0)
    transport = coordinator.transport
    packet = transport.send_to_entity(
        1, 2, payload_bytes=16, deadline=4.0, priority_class=1,
        now=coordinator.sim.now, ttl=32,
    )
    transport.migrate(2, 3, coordinator.sim.now)
    coordinator.sim.run(5.0)

    assert packet.state == "delivered"
    assert packet.rebinds == 1
    assert [node_id for node_id, _ in packet.hop_trace] == [0, 1, 2, 3, 4, 3]
    assert transport.stats.rebinds == 1
    assert transport.connection(1, 2).app_log[1] == [1]
