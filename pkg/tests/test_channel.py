# pylint: disable=missing-function-docstring

"""Tests for the unit-disk radio channel."""

from dataclasses import dataclass, field

import pytest

from wsnstack.channel import Channel, Frame, RadioModel, Transmission
from wsnstack.const import BROADCAST
from wsnstack.helpers import Location
from wsnstack.kernel import Simulator


@dataclass(eq=False)
class FakeRadio:
    """Minimal node attached to the channel."""

    node_id: int
    location: Location
    alive: bool = True
    awake: bool = True
    received: list[Frame] = field(default_factory=list)
    completed: list[Transmission] = field(default_factory=list)
    busy: list[tuple[float, float]] = field(default_factory=list)

    def radio_tx(self, active: bool) -> None:
        """Ignore radio state."""

    def radio_rx(self, active: bool) -> None:
        """Ignore radio state."""

    def observe_busy(self, start: float, end: float) -> None:
        self.busy.append((start, end))

    def on_frame_received(self, frame: Frame) -> None:
        self.received.append(frame)

    def on_transmission_complete(self, tx: Transmission) -> None:
        self.completed.append(tx)


def _setup(xs: list[float], radio: RadioModel | None = None) -> tuple[Simulator, Channel, list]:
    sim = Simulator(3)
    channel = Channel(sim, radio or RadioModel(range=40.0), log_receptions=True)
    nodes = [FakeRadio(i, Location(x, 0.0)) for i, x in enumerate(xs)]
    channel.attach(nodes)
    return sim, channel, nodes


def test_neighbors_follow_unit_disk() -> None:
    _, channel, _ = _setup([0.0, 30.0, 80.0, 70.0])
    assert channel.neighbors(0) == (1,)
    assert channel.neighbors(1) == (0, 3)
    assert channel.neighbors(2) == (3,)


def test_radio_model_validation_and_airtime() -> None:
    radio = RadioModel(range=40.0, bitrate=250_000.0)
    assert radio.airtime(125) == pytest.approx(0.004)
    with pytest.raises(ValueError):
        RadioModel(range=0.0)
    with pytest.raises(ValueError):
        RadioModel(loss_probability=1.5)


def test_frame_reaches_awake_neighbors_after_airtime() -> None:
    sim, channel, nodes = _setup([0.0, 30.0, 60.0])
    nodes[2].awake = False
    frame = Frame(1, BROADCAST, "beacon", 125)
    channel.transmit(frame)
    assert channel.is_transmitting(1)
    assert channel.busy_until(0) == pytest.approx(0.004)
    sim.run(0.003)
    assert not nodes[0].received
    sim.run(0.01)
    assert nodes[0].received == [frame]
    assert not nodes[2].received
    assert nodes[1].completed[0].receivers == (0,)
    assert channel.stats.frames["beacon"] == 1
    assert channel.stats.bytes["beacon"] == 125
    assert channel.stats.rx_log == [(pytest.approx(0.004), 0, "beacon")]


def test_hidden_terminals_collide_at_common_receiver() -> None:
    sim, channel, nodes = _setup([0.0, 30.0, 60.0])
    assert 2 not in channel.neighbors(0)
    channel.transmit(Frame(0, BROADCAST, "beacon", 50))
    channel.transmit(Frame(2, BROADCAST, "beacon", 50))
    sim.run(1.0)
    assert not nodes[1].received
    assert channel.stats.collisions == 2


def test_loss_probability_matches_receive_fraction() -> None:
    sim, channel, _ = _setup([0.0, 30.0], RadioModel(range=40.0, loss_probability=0.5))
    frame = Frame(0, BROADCAST, "beacon", 10)
    trials = 100_000
    received = sum(len(channel.broadcast_deliver(0, frame)) for _ in range(trials))
    assert received / trials == pytest.approx(0.5, abs=0.02)
    assert channel.stats.losses == trials - received
    assert sim.now == 0.0


def test_dead_node_is_not_a_receiver() -> None:
    sim, channel, nodes = _setup([0.0, 30.0])
    nodes[1].alive = False
    tx = channel.transmit(Frame(0, 1, "data", 20))
    sim.run(1.0)
    assert tx.receivers == ()
    assert not nodes[1].received
    assert nodes[0].completed == [tx]
