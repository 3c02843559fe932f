"""Deterministic discrete-event kernel and seeded random streams."""

from __future__ import annotations

import heapq
import itertools
import logging
import zlib
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .const import TIME_EPSILON
from .exceptions import CausalityError

_LOGGER = logging.getLogger(__name__)

# Event times are bucketed on this grid so that timestamps closer than
# TIME_EPSILON compare equal and fall back to insertion order.
_TICKS_PER_SECOND = 1.0 / TIME_EPSILON

TraceRecord = tuple[float, int | None, str, str]


@dataclass(slots=True, eq=False)
class EventHandle:
    """Handle returned by :meth:`Simulator.schedule`."""

    time: float
    seq: int
    callback: Callable[..., Any]
    args: tuple[Any, ...]
    node: int | None = None
    module: str = "kernel"
    kind: str = "event"
    cancelled: bool = field(default=False)

    def cancel(self) -> None:
        """Prevent the event from firing."""

        self.cancelled = True


class Simulator:
    """Single-threaded event loop with a floating-point clock."""

    def __init__(self, seed: int, *, trace: bool = False) -> None:
        """Initialize an empty simulation at time zero."""

        self.seed = int(seed)
        self.trace_enabled = trace
        self.trace: list[TraceRecord] = []
        self.dispatched = 0
        self._now = 0.0
        self._queue: list[tuple[int, int, EventHandle]] = []
        self._seq = itertools.count()
        self._streams: dict[tuple[str, int | None], np.random.Generator] = {}
        self._stopped = False

    @property
    def now(self) -> float:
        """Return the current simulation time in seconds."""

        return self._now

    @property
    def pending(self) -> int:
        """Return the number of queued, non-cancelled events."""

        return sum(1 for _, _, handle in self._queue if not handle.cancelled)

    def schedule(
        self,
        at: float,
        callback: Callable[..., Any],
        *args: Any,
        node: int | None = None,
        module: str = "kernel",
        kind: str = "event",
    ) -> EventHandle:
        """Queue ``callback(*args)`` to fire at absolute time ``at``."""

        if at < self._now - TIME_EPSILON:
            raise CausalityError(at, self._now)
        at = max(at, self._now)
        handle = EventHandle(at, next(self._seq), callback, args, node, module, kind)
        heapq.heappush(self._queue, (round(at * _TICKS_PER_SECOND), handle.seq, handle))
        return handle

    def schedule_in(
        self, delay: float, callback: Callable[..., Any], *args: Any, **kwargs: Any
    ) -> EventHandle:
        """Queue ``callback`` ``delay`` seconds from now."""

        return self.schedule(self._now + delay, callback, *args, **kwargs)

    def rng(self, module: str, node: int | None = None) -> np.random.Generator:
        """Return the independent random stream for ``(module, node)``.

        The stream depends only on the run seed and the label, so enabling
        one subsystem never perturbs the draws of another.
        """

        key = (module, node)
        stream = self._streams.get(key)
        if stream is None:
            stream = make_stream(self.seed, module, node)
            self._streams[key] = stream
        return stream

    def stop(self) -> None:
        """Stop :meth:`run` after the current event."""

        self._stopped = True

    def run(self, until: float) -> None:
        """Dispatch events up to and including time ``until``."""

        limit = round(until * _TICKS_PER_SECOND)
        self._stopped = False
        while self._queue and not self._stopped:
            tick, _, handle = self._queue[0]
            if tick > limit:
                break
            heapq.heappop(self._queue)
            if handle.cancelled:
                continue
            assert handle.time >= self._now - TIME_EPSILON, "event time went backwards"
            self._now = max(self._now, handle.time)
            self.dispatched += 1
            if self.trace_enabled:
                self.trace.append((handle.time, handle.node, handle.module, handle.kind))
            handle.callback(*handle.args)
        if not self._stopped and until > self._now:
            self._now = until
        _LOGGER.debug("Simulation reached t=%.6f after %d events", self._now, self.dispatched)


def make_stream(seed: int, module: str, node: int | None = None) -> np.random.Generator:
    """Build the generator for ``(seed, module, node)`` without a simulator."""

    label = zlib.crc32(module.encode("utf-8"))
    sequence = np.random.SeedSequence(
        entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
        spawn_key=(label, 0 if node is None else int(node) + 1),
    )
    return np.random.Generator(np.random.PCG64(sequence))


class PeriodicTimer:
    """Fire a callback every ``period`` seconds until cancelled."""

    def __init__(
        self,
        sim: Simulator,
        period: float,
        callback: Callable[[], Any],
        *,
        first_at: float | None = None,
        node: int | None = None,
        module: str = "kernel",
        kind: str = "timer",
    ) -> None:
        """Arm the timer; the first tick is at ``first_at`` or one period out."""

        self._sim = sim
        self._period = period
        self._callback = callback
        self._node = node
        self._module = module
        self._kind = kind
        self._unsub_timer: EventHandle | None = None
        self._cancelled = False
        self._schedule(sim.now + period if first_at is None else first_at)

    @property
    def period(self) -> float:
        """Return the configured period in seconds."""

        return self._period

    @property
    def active(self) -> bool:
        """Return ``True`` while a tick is pending."""

        return self._unsub_timer is not None

    def _schedule(self, at: float) -> None:
        self._unsub_timer = self._sim.schedule(
            at, self._fire, node=self._node, module=self._module, kind=self._kind
        )

    def _fire(self) -> None:
        self._unsub_timer = None
        self._callback()
        if not self._cancelled and self._unsub_timer is None and self._period > 0:
            self._schedule(self._sim.now + self._period)

    def cancel(self) -> None:
        """Cancel the pending tick."""

        self._cancelled = True
        if self._unsub_timer:
            self._unsub_timer.cancel()
            self._unsub_timer = None
