"""Slotted CSMA MAC with optional per-hop acknowledgements."""

from __future__ import annotations

import logging
from collections import Counter, deque
from collections.abc import Mapping
from dataclasses import dataclass, field, fields
from typing import Any, Callable, Union

from ..channel import Frame, Transmission
from ..const import FRAME_KIND, MAC_FAILURE
from ..helpers import clamp
from ..kernel import EventHandle, PeriodicTimer
from ._base import BaseNode

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class MacParams:
    """Contention, retry and estimator settings of the MAC."""

    slot_time: float = 320e-6
    cw_min: int = 8
    cw_max: int = 64
    retry_limit: int = 3
    ack_timeout: float = 2e-3
    header_bytes: int = 16
    reliable: bool = True
    delay_alpha: float = 0.3
    utilization_window: float = 1.0
    suspicion_timeout: float = 3.0

    def __post_init__(self) -> None:
        if self.slot_time <= 0:
            raise ValueError("slot time must be positive")
        if not 1 <= self.cw_min <= self.cw_max:
            raise ValueError("contention window bounds must satisfy 1 <= cw_min <= cw_max")
        if self.retry_limit < 0:
            raise ValueError("retry limit must be non-negative")
        if not 0 < self.delay_alpha <= 1:
            raise ValueError("delay smoothing must be within (0, 1]")
        if self.utilization_window <= 0 or self.suspicion_timeout <= 0:
            raise ValueError("windows and timeouts must be positive")

    @classmethod
    def from_config(cls, data: Mapping[str, Any]) -> MacParams:
        """Build the parameters from a validated ``mac`` section."""

        return cls(**{f.name: data[f.name] for f in fields(cls) if f.name in data})


@dataclass(frozen=True, slots=True)
class Delivered:
    """The frame was acknowledged (or sent, when unreliable)."""

    delay: float


@dataclass(frozen=True, slots=True)
class Failed:
    """The frame could not be delivered."""

    reason: str


MacOutcome = Union[Delivered, Failed]


@dataclass(slots=True)
class LinkStats:
    """Per-neighbor delay estimates, channel busy time and liveness."""

    alpha: float
    window: float
    delay: dict[int, float] = field(default_factory=dict)
    last_heard: dict[int, float] = field(default_factory=dict)
    suspected: set[int] = field(default_factory=set)
    busy: deque[tuple[float, float]] = field(default_factory=deque)

    def observe_delay(self, neighbor: int, sample: float) -> float:
        """Fold ``sample`` into the neighbor's EWMA and return it."""

        if sample <= 0:
            raise ValueError(f"delay samples must be positive, got {sample}")
        previous = self.delay.get(neighbor)
        if previous is None:
            value = sample
        else:
            value = self.alpha * sample + (1.0 - self.alpha) * previous
        self.delay[neighbor] = value
        return value

    def inflate(self, neighbor: int, factor: float, floor: float) -> float:
        """Scale the neighbor's delay estimate by ``factor``."""

        value = max(self.delay.get(neighbor, floor), floor) * factor
        self.delay[neighbor] = value
        return value

    def mean_delay(self) -> float | None:
        """Return the mean delay estimate over known neighbors."""

        if not self.delay:
            return None
        return sum(self.delay.values()) / len(self.delay)

    def add_busy(self, start: float, end: float) -> None:
        """Record that the medium was busy over ``[start, end]``."""

        if end <= start:
            return
        if self.busy and start <= self.busy[-1][1]:
            first, last = self.busy[-1]
            self.busy[-1] = (first, max(last, end))
        else:
            self.busy.append((start, end))

    def utilization(self, now: float) -> float:
        """Return the busy fraction of the last window; 0 before one elapsed."""

        if now < self.window:
            return 0.0
        low = now - self.window
        while self.busy and self.busy[0][1] <= low:
            self.busy.popleft()
        total = 0.0
        for start, end in self.busy:
            overlap = min(end, now) - max(start, low)
            if overlap > 0:
                total += overlap
        return clamp(total / self.window, 0.0, 1.0)


@dataclass(slots=True)
class MacCounters:
    """MAC activity exported into the run metrics."""

    attempts: int = 0
    retransmissions: int = 0
    delivered: int = 0
    failed: Counter[str] = field(default_factory=Counter)
    acks_sent: int = 0
    duplicates: int = 0
    suspicions: int = 0


@dataclass(slots=True, eq=False)
class _Pending:
    frame: Frame
    on_outcome: Callable[[MacOutcome], None] | None
    enqueued_at: float
    reached: bool = False


class MacLayer(BaseNode):
    """Mixin implementing channel access, acknowledgements and link stats."""

    def __init__(self, *args: Any, **kwargs: Any) -> None:
        super().__init__(*args, **kwargs)
        mac = self.params.mac
        self.link = LinkStats(mac.delay_alpha, mac.utilization_window)
        self.mac_stats = MacCounters()
        self._control_queue: deque[_Pending] = deque()
        self._data_queue: deque[_Pending] = deque()
        self._current: _Pending | None = None
        self._attempts = 0
        self._cw = mac.cw_min
        self._frame_seq = 0
        self._rx_last_seq: dict[int, int] = {}
        self._backoff_handle: EventHandle | None = None
        self._ack_handle: EventHandle | None = None
        self._suspicion_timer: PeriodicTimer | None = None

    @property
    def mac_idle(self) -> bool:
        """Return ``True`` when no frame is queued or in progress."""

        return self._current is None and not self._control_queue and not self._data_queue

    @property
    def mac_backlog(self) -> int:
        """Return the number of frames waiting in the MAC."""

        pending = len(self._control_queue) + len(self._data_queue)
        return pending + (1 if self._current is not None else 0)

    def start(self) -> None:
        super().start()
        if self._suspicion_timer is None:
            self._suspicion_timer = PeriodicTimer(
                self.sim,
                self.params.mac.suspicion_timeout / 3.0,
                self._check_suspicions,
                node=self.node_id,
                module="mac",
                kind="suspicion_check",
            )

    def _reset_layer(self) -> None:
        super()._reset_layer()
        for handle in (self._backoff_handle, self._ack_handle):
            if handle is not None:
                handle.cancel()
        self._backoff_handle = None
        self._ack_handle = None
        if self._suspicion_timer is not None:
            self._suspicion_timer.cancel()
            self._suspicion_timer = None
        self._current = None
        self._control_queue.clear()
        self._data_queue.clear()
        self._cw = self.params.mac.cw_min
        self.link.last_heard.clear()
        self.link.suspected.clear()

    def _resume_layer(self) -> None:
        super()._resume_layer()
        if self._current is not None:
            if self._backoff_handle is None and self._ack_handle is None:
                self._schedule_backoff()
        else:
            self._start_next()

    def _queues_empty(self) -> bool:
        return self.mac_idle and super()._queues_empty()

    # Sending

    def send_frame(
        self,
        frame: Frame,
        reliable: bool,
        on_outcome: Callable[[MacOutcome], None] | None = None,
    ) -> None:
        """Queue ``frame``; ``on_outcome`` receives the result of unicasts."""

        if not self.alive:
            if on_outcome is not None:
                on_outcome(Failed(MAC_FAILURE.NODE_DOWN))
            return
        self._frame_seq += 1
        frame.seq = self._frame_seq
        frame.reliable = reliable and not frame.is_broadcast
        pending = _Pending(frame, on_outcome, self.now)
        if frame.kind == FRAME_KIND.DATA:
            self._data_queue.append(pending)
        else:
            self._control_queue.append(pending)
        self._start_next()

    def send_control(self, frame: Frame) -> None:
        """Queue an unacknowledged control frame ahead of data."""

        self.send_frame(frame, reliable=False)

    def transmit_immediately(self, frame: Frame) -> bool:
        """Put ``frame`` on the air now if the medium is idle."""

        if not self.operational or self.ctx.channel.is_busy(self.node_id):
            return False
        self._frame_seq += 1
        frame.seq = self._frame_seq
        self.ctx.channel.transmit(frame)
        return True

    def _start_next(self) -> None:
        if self._current is not None or not self.operational:
            return
        if self._control_queue:
            self._current = self._control_queue.popleft()
        elif self._data_queue:
            self._current = self._data_queue.popleft()
        else:
            return
        self._attempts = 0
        self._cw = self.params.mac.cw_min
        self._schedule_backoff()

    def _schedule_backoff(self, start: float | None = None) -> None:
        slots = int(self.rng("mac").integers(0, self._cw))
        begin = self.now if start is None else max(self.now, start)
        self._backoff_handle = self.sim.schedule(
            begin + (slots + 1) * self.params.mac.slot_time,
            self._on_backoff_done,
            node=self.node_id,
            module="mac",
            kind="backoff",
        )

    def _on_backoff_done(self) -> None:
        self._backoff_handle = None
        if self._current is None or not self.operational:
            return
        busy_until = self.ctx.channel.carrier_sense(self.node_id)
        if busy_until is not None:
            self._schedule_backoff(busy_until)
            return
        self._attempts += 1
        self.mac_stats.attempts += 1
        if self._attempts > 1:
            self.mac_stats.retransmissions += 1
        self.ctx.channel.transmit(self._current.frame)

    def on_transmission_complete(self, tx: Transmission) -> None:
        """Handle the end of one of our own transmissions."""

        pending = self._current
        if pending is None or tx.frame is not pending.frame:
            return
        frame = pending.frame
        if frame.is_broadcast:
            self._on_broadcast_sent(frame)
            self._finish(None)
            return
        if frame.dst in tx.receivers:
            pending.reached = True
        if frame.reliable:
            self._ack_handle = self.schedule_in(
                self.params.mac.ack_timeout, self._on_ack_timeout,
                module="mac", kind="ack_timeout",
            )
            return
        self._complete_delivery(pending)

    def _on_ack_timeout(self) -> None:
        self._ack_handle = None
        pending = self._current
        if pending is None:
            return
        mac = self.params.mac
        if self._attempts <= mac.retry_limit:
            self._cw = min(2 * self._cw, mac.cw_max)
            self._schedule_backoff()
            return
        reason = MAC_FAILURE.RETRIES_EXHAUSTED if pending.reached else MAC_FAILURE.NO_RECEIVER
        self.mac_stats.failed[reason] += 1
        _LOGGER.debug(
            "t=%.6f node %s gave up on frame to %s after %d attempts",
            self.now, self.node_id, pending.frame.dst, self._attempts,
        )
        self._finish(Failed(reason))

    def _complete_delivery(self, pending: _Pending) -> None:
        delay = max(self.now - pending.enqueued_at, 1e-9)
        self.mac_stats.delivered += 1
        self.observe_delay(pending.frame.dst, delay)
        self._finish(Delivered(delay))

    def _finish(self, outcome: MacOutcome | None) -> None:
        pending = self._current
        self._current = None
        self._cw = self.params.mac.cw_min
        if pending is not None and outcome is not None and pending.on_outcome is not None:
            pending.on_outcome(outcome)
        self._start_next()
        if self.mac_idle:
            self._on_mac_idle()

    # Receiving

    def observe_busy(self, start: float, end: float) -> None:
        """Record airtime heard on the medium."""

        self.link.add_busy(start, end)

    def on_frame_received(self, frame: Frame) -> None:
        """Dispatch an intact frame heard by this node."""

        if not self.operational:
            return
        self.link.last_heard[frame.src] = self.now
        self.link.suspected.discard(frame.src)
        if frame.kind == FRAME_KIND.ACK:
            self._on_ack(frame)
        elif frame.is_broadcast:
            self._on_control_frame(frame)
        elif frame.dst == self.node_id:
            if frame.kind != FRAME_KIND.DATA:
                self._on_control_frame(frame)
                return
            if frame.reliable:
                self.schedule_in(
                    self.params.mac.slot_time, self._send_ack, frame.src, frame.seq,
                    module="mac", kind="ack",
                )
            if self._rx_last_seq.get(frame.src) == frame.seq:
                self.mac_stats.duplicates += 1
                return
            self._rx_last_seq[frame.src] = frame.seq
            self._on_data_frame(frame)

    def _send_ack(self, dst: int, seq: int) -> None:
        if not self.operational or self.ctx.channel.is_transmitting(self.node_id):
            return
        self.mac_stats.acks_sent += 1
        self.ctx.channel.transmit(
            Frame(self.node_id, dst, FRAME_KIND.ACK, self.params.mac.header_bytes, seq=seq)
        )

    def _on_ack(self, frame: Frame) -> None:
        pending = self._current
        if (
            frame.dst != self.node_id
            or pending is None
            or self._ack_handle is None
            or frame.src != pending.frame.dst
            or frame.seq != pending.frame.seq
        ):
            return
        self._ack_handle.cancel()
        self._ack_handle = None
        self._complete_delivery(pending)

    # Link statistics

    def observe_delay(self, neighbor: int, sample: float) -> float:
        """Update the per-neighbor delay EWMA with ``sample``."""

        value = self.link.observe_delay(neighbor, sample)
        self._on_delay_sample(neighbor, value)
        return value

    def channel_utilization(self) -> float:
        """Return the busy fraction sensed over the last window."""

        return self.link.utilization(self.now)

    def suspect_failure(self, neighbor: int) -> bool:
        """Flag ``neighbor`` once it has been silent past the timeout."""

        heard = self.link.last_heard.get(neighbor)
        if heard is None or neighbor in self.link.suspected:
            return False
        if self.now - heard <= self.params.mac.suspicion_timeout:
            return False
        self.link.suspected.add(neighbor)
        self.mac_stats.suspicions += 1
        _LOGGER.debug("t=%.6f node %s suspects %s", self.now, self.node_id, neighbor)
        self._on_neighbor_suspected(neighbor)
        return True

    def _check_suspicions(self) -> None:
        if not self.operational:
            return
        for neighbor in sorted(self.link.last_heard):
            self.suspect_failure(neighbor)
