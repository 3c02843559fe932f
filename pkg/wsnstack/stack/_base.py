"""Shared node state and the hook surface the protocol layers plug into."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable

from ..channel import Channel, Frame
from ..helpers import Area, Location
from ..kernel import EventHandle, Simulator
from ..packet import PacketLedger

if TYPE_CHECKING:
    import numpy as np

    from ..localization import LocationEstimate
    from ..transport import EntityTransport
    from .node import StackParams

_LOGGER = logging.getLogger(__name__)


@dataclass(slots=True)
class NodeContext:
    """Container for the run-wide collaborators every node sees."""

    sim: Simulator
    channel: Channel
    params: StackParams
    ledger: PacketLedger
    area: Area
    node_count: int
    nodes: dict[int, Any] = field(default_factory=dict)
    transport: EntityTransport | None = None
    localize: Callable[[Any], LocationEstimate | None] | None = None


class BaseNode:
    """One sensor node; the layer mixins add behaviour on top of this state."""

    def __init__(
        self,
        node_id: int,
        location: Location,
        ctx: NodeContext,
        *,
        anchor: bool = False,
    ) -> None:
        """Initialize the node with its true location."""

        self.node_id = node_id
        self.location = location
        self.ctx = ctx
        self.is_anchor = anchor
        self.estimate: LocationEstimate | None = None
        self.alive = True
        self.awake = True
        self.forced_sleep = False

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.node_id}>"

    @property
    def sim(self) -> Simulator:
        """Return the simulator driving this node."""

        return self.ctx.sim

    @property
    def now(self) -> float:
        """Return the current simulation time."""

        return self.ctx.sim.now

    @property
    def params(self) -> StackParams:
        """Return the protocol parameters of the run."""

        return self.ctx.params

    @property
    def position(self) -> Location | None:
        """Return the node's own location estimate, if it has one."""

        return self.estimate.position if self.estimate is not None else None

    @property
    def localized(self) -> bool:
        """Return ``True`` once the node has a location estimate."""

        return self.estimate is not None

    @property
    def operational(self) -> bool:
        """Return ``True`` while the node is alive and awake."""

        return self.alive and self.awake

    def rng(self, module: str) -> np.random.Generator:
        """Return this node's random stream for ``module``."""

        return self.ctx.sim.rng(module, self.node_id)

    def schedule_in(
        self, delay: float, callback: Callable[..., Any], *args: Any, module: str, kind: str
    ) -> EventHandle:
        """Schedule a node-local event ``delay`` seconds from now."""

        return self.ctx.sim.schedule_in(
            delay, callback, *args, node=self.node_id, module=module, kind=kind
        )

    def peer(self, node_id: int) -> BaseNode | None:
        """Return another node of the network by id."""

        return self.ctx.nodes.get(node_id)

    # Layer hooks. Layers override these and chain to ``super()`` where
    # several of them contribute.

    def start(self) -> None:
        """Arm the node's periodic timers."""

    def _reset_layer(self) -> None:
        """Drop all per-layer soft state after a crash."""

    def _resume_layer(self) -> None:
        """Resume pending work after waking up."""

    def _queues_empty(self) -> bool:
        return True

    def _backlog(self) -> int:
        return 0

    def _on_mac_idle(self) -> None:
        """Handle the MAC running out of frames to send."""

    def _on_data_frame(self, frame: Frame) -> None:
        """Handle a data frame addressed to this node."""

    def _on_control_frame(self, frame: Frame) -> None:
        """Handle a broadcast control frame."""

    def _on_broadcast_sent(self, frame: Frame) -> None:
        """Handle the end of one of our own broadcasts."""

    def _on_delay_sample(self, neighbor: int, delay: float) -> None:
        """Handle a fresh per-hop delay estimate."""

    def _on_neighbor_suspected(self, neighbor: int) -> None:
        """Handle a neighbor that has gone silent."""

    def _on_unit_received(self, unit: Any, sender: int) -> None:
        """Handle one disaggregated unit."""

    def _on_unit_dropped(self, unit: Any, reason: str) -> None:
        """Handle a unit the aggregation layer had to discard."""

    def _on_aggregate_outcome(self, units: list[Any], outcome: Any) -> None:
        """Handle the MAC outcome for an aggregate frame."""
