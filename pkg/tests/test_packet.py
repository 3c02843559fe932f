# pylint: disable=missing-function-docstring

"""Tests for destinations and the packet ledger."""

import pytest

from wsnstack.const import DROP_REASON
from wsnstack.helpers import Location
from wsnstack.packet import Destination, PacketLedger


def _create(ledger: PacketLedger, now: float = 0.0):
    return ledger.create(
        source=0,
        source_node=0,
        dest=Destination(Location(50.0, 50.0), 5.0),
        deadline=now + 1.0,
        priority_class=1,
        payload_bytes=32,
        now=now,
        ttl=16,
    )


def test_destination_contains() -> None:
    region = Destination(Location(0.0, 0.0), 5.0)
    assert region.contains(Location(3.0, 4.0))
    assert not region.contains(Location(3.0, 4.1))
    point = Destination(Location(1.0, 1.0))
    assert point.contains(Location(1.0, 1.0))
    with pytest.raises(ValueError):
        Destination(Location(0.0, 0.0), -1.0)


def test_new_packet_is_held_by_its_source() -> None:
    ledger = PacketLedger()
    packet = _create(ledger, now=2.5)
    assert packet.id == 0
    assert packet.holder == 0
    assert packet.hop_trace == [(0, 2.5)]
    assert packet.hops == 0
    assert packet.token == 1
    assert not packet.terminal
    assert ledger.get(packet.id) is packet
    assert ledger.get(99) is None
    assert _create(ledger).id == 1


def test_every_packet_ends_in_one_state() -> None:
    ledger = PacketLedger()
    delivered, dropped, pending = (_create(ledger) for _ in range(3))

    ledger.deliver(delivered, 1.0)
    ledger.drop(delivered, DROP_REASON.VOID, 1.5)
    ledger.drop(dropped, DROP_REASON.EXPIRED, 2.0)
    ledger.deliver(dropped, 2.5)

    assert delivered.state == "delivered"
    assert delivered.finished_at == 1.0
    assert delivered.reason is None
    assert dropped.reason == "expired"
    assert dropped.holder is None
    assert ledger.generated == 3
    assert ledger.delivered == 1
    assert ledger.dropped == {"expired": 1}
    assert ledger.in_flight == 1
    assert not pending.terminal


def test_unknown_drop_reason_is_rejected() -> None:
    ledger = PacketLedger()
    packet = _create(ledger)
    with pytest.raises(ValueError):
        ledger.drop(packet, "lostInSpace", 1.0)
    assert not packet.terminal
    assert ledger.in_flight == 1
