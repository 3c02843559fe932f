"""Energy accounting and coverage-preserving duty cycling."""

from __future__ import annotations

import functools
import logging
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, fields
from typing import Any

import numpy as np

from ..const import ACTIVITIES, ACTIVITY
from ..helpers import Location
from ..kernel import EventHandle, PeriodicTimer
from ._base import BaseNode

_LOGGER = logging.getLogger(__name__)

AWAKE = "awake"
ASLEEP = "asleep"


@dataclass(frozen=True, slots=True)
class EnergyRates:
    """Power draw per activity in milliwatts."""

    tx: float = 60.0
    rx: float = 45.0
    idle: float = 12.0
    sleep: float = 0.03
    cpu: float = 6.0

    def __post_init__(self) -> None:
        for item in fields(self):
            if getattr(self, item.name) < 0:
                raise ValueError(f"energy rate {item.name} must be non-negative")

    def watts(self, activity: str) -> float:
        """Return the draw of ``activity`` in watts."""

        if activity not in ACTIVITIES:
            raise ValueError(f"unknown activity {activity}")
        return getattr(self, activity) / 1000.0


@dataclass(frozen=True, slots=True)
class EnergyParams:
    """Battery budget and processing cost per handled packet."""

    initial_budget: float = 1000.0
    cpu_time_per_packet: float = 1e-4
    rates: EnergyRates = field(default_factory=EnergyRates)

    @classmethod
    def from_config(cls, data: Mapping[str, Any]) -> EnergyParams:
        """Build the parameters from a validated ``energy`` section."""

        return cls(
            initial_budget=data["initial_budget"],
            cpu_time_per_packet=data["cpu_time_per_packet"],
            rates=EnergyRates(**data.get("rates", {})),
        )


@dataclass(frozen=True, slots=True)
class SensingParams:
    """Sensing disk and the pitch of the coverage sample grid."""

    sensing_radius: float = 10.0
    grid_resolution: float = 2.5

    def __post_init__(self) -> None:
        if self.sensing_radius <= 0:
            raise ValueError("sensing radius must be positive")
        if not 0 < self.grid_resolution <= self.sensing_radius / 4:
            raise ValueError("grid resolution must be within (0, sensing_radius / 4]")


@dataclass(frozen=True, slots=True)
class DutyCycleParams:
    """Periodic sleep requests."""

    enabled: bool = False
    check_period: float = 1.0
    sleep_duration: float = 2.0


@dataclass(slots=True)
class EnergyLedger:
    """Joules consumed per activity against a fixed initial budget."""

    initial_budget: float
    per_activity: dict[str, float] = field(
        default_factory=lambda: dict.fromkeys(ACTIVITIES, 0.0)
    )

    @property
    def consumed(self) -> float:
        """Return the total energy spent so far."""

        return math.fsum(self.per_activity.values())

    @property
    def remaining(self) -> float:
        """Return the energy left in the budget."""

        return self.initial_budget - self.consumed

    def charge(self, activity: str, joules: float) -> None:
        """Add ``joules`` spent on ``activity``."""

        if joules < 0:
            raise ValueError("energy charges must be non-negative")
        self.per_activity[activity] += joules


@dataclass(slots=True)
class DutyCycleState:
    """Awake/asleep mode; ``wake_at`` is set only for granted sleeps."""

    mode: str = AWAKE
    wake_at: float | None = None


@functools.lru_cache(maxsize=16)
def _disk_offsets(radius: float, pitch: float) -> np.ndarray:
    steps = int(math.floor(radius / pitch))
    axis = np.arange(-steps, steps + 1, dtype=float) * pitch
    xx, yy = np.meshgrid(axis, axis)
    offsets = np.column_stack((xx.ravel(), yy.ravel()))
    keep = np.hypot(offsets[:, 0], offsets[:, 1]) <= radius + 1e-9
    offsets = offsets[keep]
    offsets.setflags(write=False)
    return offsets


def coverage_redundant(
    location: Location,
    awake_neighbors: Iterable[tuple[int, Location]],
    params: SensingParams,
) -> bool:
    """Return ``True`` if the neighbors' disks cover every sample of ours."""

    neighbors = np.array([tuple(loc) for _, loc in awake_neighbors], dtype=float)
    if neighbors.size == 0:
        return False
    points = _disk_offsets(params.sensing_radius, params.grid_resolution) + np.asarray(
        location, dtype=float
    )
    dx = points[:, None, 0] - neighbors[None, :, 0]
    dy = points[:, None, 1] - neighbors[None, :, 1]
    covered = np.hypot(dx, dy) <= params.sensing_radius + 1e-9
    return bool(covered.any(axis=1).all())


class PowerLayer(BaseNode):
    """Mixin implementing the energy ledger, sleep grants and failures."""

    def __init__(self, *args: Any, **kwargs: Any) -> None:
        super().__init__(*args, **kwargs)
        self.energy = EnergyLedger(self.params.energy.initial_budget)
        self.duty = DutyCycleState()
        self.sleep_intervals: list[list[float | None]] = []
        self.sleep_grants = 0
        self.sleep_denials = 0
        self.exhausted = False
        self._transmitting = False
        self._receptions = 0
        self._settled_at = self.now
        self._duty_timer: PeriodicTimer | None = None
        self._wake_handle: EventHandle | None = None
        self._exhaust_handle: EventHandle | None = None

    # Radio state accounting

    def _activity(self) -> str | None:
        if not self.alive:
            return None
        if not self.awake:
            return ACTIVITY.SLEEP
        if self._transmitting:
            return ACTIVITY.TX
        if self._receptions:
            return ACTIVITY.RX
        return ACTIVITY.IDLE

    def settle(self) -> None:
        """Charge the time spent in the current radio state."""

        now = self.now
        elapsed = now - self._settled_at
        self._settled_at = now
        activity = self._activity()
        if activity is not None and elapsed > 0:
            self.consume(activity, elapsed)

    def consume(self, activity: str, duration: float) -> None:
        """Charge ``duration`` seconds of ``activity`` to the ledger."""

        if duration < 0:
            raise ValueError("duration must be non-negative")
        if duration == 0:
            return
        self.energy.charge(activity, self.params.energy.rates.watts(activity) * duration)
        if self.alive and self.energy.remaining <= 0 and self._exhaust_handle is None:
            self._exhaust_handle = self.schedule_in(
                0.0, self._on_exhausted, module="power", kind="exhausted"
            )

    def consume_cpu(self) -> None:
        """Charge the processing cost of handling one packet."""

        if self.alive:
            self.consume(ACTIVITY.CPU, self.params.energy.cpu_time_per_packet)

    def _on_exhausted(self) -> None:
        self._exhaust_handle = None
        if self.alive:
            _LOGGER.debug("t=%.6f node %s ran out of energy", self.now, self.node_id)
            self.exhausted = True
            self.crash()

    def radio_tx(self, active: bool) -> None:
        """Enter or leave the transmit state."""

        self.settle()
        self._transmitting = active

    def radio_rx(self, active: bool) -> None:
        """Enter or leave one concurrent reception."""

        self.settle()
        self._receptions = max(0, self._receptions + (1 if active else -1))

    def finalize(self) -> None:
        """Settle the ledger at the end of the run."""

        self.settle()

    # Duty cycling

    def start(self) -> None:
        super().start()
        duty = self.params.duty_cycle
        if duty.enabled and self._duty_timer is None:
            offset = float(self.rng("power").uniform(0.0, duty.check_period))
            self._duty_timer = PeriodicTimer(
                self.sim,
                duty.check_period,
                self._duty_tick,
                first_at=self.now + offset,
                node=self.node_id,
                module="power",
                kind="duty_check",
            )

    def _duty_tick(self) -> None:
        if self.alive and self.awake and not self.forced_sleep:
            self.request_sleep(self.params.duty_cycle.sleep_duration)

    def _awake_neighbors(self, node_id: int, exclude: int) -> list[tuple[int, Location]]:
        result = []
        for neighbor_id in self.ctx.channel.neighbors(node_id):
            if neighbor_id == exclude:
                continue
            peer = self.peer(neighbor_id)
            if peer is not None and peer.operational and peer.position is not None:
                result.append((neighbor_id, peer.position))
        return result

    def _sleep_allowed(self) -> bool:
        if self.position is None or not self._queues_empty():
            return False
        if self.ctx.channel.is_transmitting(self.node_id):
            return False
        sensing = self.params.sensing
        awake = self._awake_neighbors(self.node_id, self.node_id)
        if not coverage_redundant(self.position, awake, sensing):
            return False
        for neighbor_id in self.ctx.channel.neighbors(self.node_id):
            peer = self.peer(neighbor_id)
            if (
                peer is None
                or not peer.alive
                or peer.awake
                or peer.forced_sleep
                or peer.position is None
            ):
                continue
            others = self._awake_neighbors(neighbor_id, self.node_id)
            if not coverage_redundant(peer.position, others, sensing):
                return False
        return True

    def request_sleep(self, duration: float) -> bool:
        """Sleep for ``duration`` if our coverage is redundant and queues are empty."""

        if not self.operational or self.forced_sleep or duration <= 0:
            return False
        granted = self._sleep_allowed()
        if granted:
            self.sleep_grants += 1
            self._enter_sleep(duration)
        else:
            self.sleep_denials += 1
        _LOGGER.debug(
            "t=%.6f node %s sleep request %s", self.now, self.node_id,
            "granted" if granted else "denied",
        )
        return granted

    def _enter_sleep(self, duration: float | None) -> None:
        self.settle()
        self.awake = False
        self.duty.mode = ASLEEP
        self.sleep_intervals.append([self.now, None])
        if duration is None:
            self.duty.wake_at = None
        else:
            self.duty.wake_at = self.now + duration
            self._wake_handle = self.schedule_in(
                duration, self._wake, module="power", kind="wake"
            )

    def _wake(self) -> None:
        self._wake_handle = None
        if not self.alive:
            return
        self.settle()
        self.awake = True
        self.forced_sleep = False
        self.duty.mode = AWAKE
        self.duty.wake_at = None
        if self.sleep_intervals and self.sleep_intervals[-1][1] is None:
            self.sleep_intervals[-1][1] = self.now
        self._resume_layer()

    # Failure injection

    def _reset_layer(self) -> None:
        super()._reset_layer()
        if self._duty_timer is not None:
            self._duty_timer.cancel()
            self._duty_timer = None
        if self._wake_handle is not None:
            self._wake_handle.cancel()
            self._wake_handle = None

    def crash(self) -> None:
        """Stop the node; it neither sends nor receives until recovered."""

        if not self.alive:
            return
        self.settle()
        if self.sleep_intervals and self.sleep_intervals[-1][1] is None:
            self.sleep_intervals[-1][1] = self.now
        self.alive = False
        self._transmitting = False
        self._receptions = 0
        self._reset_layer()
        _LOGGER.debug("t=%.6f node %s crashed", self.now, self.node_id)

    def force_sleep(self) -> None:
        """Put the node to sleep regardless of coverage until recovered."""

        if not self.alive or self.forced_sleep:
            return
        if self.awake:
            self._enter_sleep(None)
        elif self._wake_handle is not None:
            self._wake_handle.cancel()
            self._wake_handle = None
            self.duty.wake_at = None
        self.forced_sleep = True

    def recover(self) -> None:
        """Revive a crashed node or wake a force-slept one."""

        if not self.alive:
            if self.exhausted:
                return
            self._settled_at = self.now
            self.alive = True
            self.awake = True
            self.forced_sleep = False
            self.duty = DutyCycleState()
            self.start()
            _LOGGER.debug("t=%.6f node %s recovered", self.now, self.node_id)
        elif self.forced_sleep:
            self._wake()

    def move_to(self, location: Location) -> None:
        """Teleport the node and refresh its estimate."""

        self.location = location
        self.ctx.channel.rebuild_neighbors()
        if self.ctx.localize is not None:
            self.estimate = self.ctx.localize(self)
