"""Coordinator building a scenario and driving it to completion."""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Any

from .channel import Channel
from .const import TIME_EPSILON
from .exceptions import UnresolvableDestinationError
from .helpers import Area, Location, distance
from .kernel import PeriodicTimer, Simulator
from .localization import LocalizationParams, Localizer
from .metrics import FlowStats, RunMetrics, TimeSample, collect_metrics
from .packet import Destination, Packet, PacketLedger
from .stack import NodeContext, SensorNode, StackParams
from .topology import (
    FailureInjector,
    build_failure_schedule,
    choose_anchors,
    generate_topology,
)
from .transport import EntityTransport, TransportParams

_LOGGER = logging.getLogger(__name__)


@dataclass(slots=True)
class FlowContext:
    """One configured traffic flow and its generator timer."""

    index: int
    spec: Mapping[str, Any]
    stats: FlowStats
    timer: PeriodicTimer | None = None


class ScenarioCoordinator:
    """Own the simulator, the nodes and every run-wide service of a scenario."""

    def __init__(self, config: Mapping[str, Any], seed: int | None = None) -> None:
        """Build the network described by a validated ``config``."""

        self.config = config
        self.seed = int(config["seed"] if seed is None else seed)
        self.duration = float(config["duration"])
        outputs = config["outputs"]
        topology = config["topology"]

        self.sim = Simulator(self.seed, trace=outputs["events"])
        self.params = StackParams.from_config(config)
        self.area = Area(topology["width"], topology["height"])
        self.channel = Channel(
            self.sim, self.params.radio, log_receptions=outputs["receptions"]
        )
        self.ledger = PacketLedger()

        count = topology["count"]
        if topology["positions"] is not None:
            placements = [(i, Location(*xy)) for i, xy in enumerate(topology["positions"])]
        else:
            placements = generate_topology(count, self.area, self.seed)
        anchors = choose_anchors(count, topology["anchor_fraction"], self.seed)

        self.ctx = NodeContext(
            sim=self.sim,
            channel=self.channel,
            params=self.params,
            ledger=self.ledger,
            area=self.area,
            node_count=count,
        )
        self.nodes: dict[int, SensorNode] = {
            node_id: SensorNode(node_id, location, self.ctx, anchor=node_id in anchors)
            for node_id, location in placements
        }
        self.ctx.nodes = self.nodes
        self.channel.attach(self.nodes.values())

        self.localizer = Localizer(
            LocalizationParams.from_config(config["localization"]),
            self.channel,
            self.area,
            self.seed,
        )
        self.ctx.localize = self.localizer
        self.transport = EntityTransport(
            TransportParams.from_config(config["transport"]), self.ledger, self.nodes
        )
        self.ctx.transport = self.transport
        self.injector = FailureInjector(self.sim, self.nodes)

        self.flows = [
            FlowContext(index, spec, FlowStats()) for index, spec in enumerate(config["traffic"])
        ]
        self.samples: list[TimeSample] = []
        self._sampler: PeriodicTimer | None = None
        self._finished = False

    @property
    def flow_stats(self) -> list[FlowStats]:
        """Return the generation bookkeeping of every flow."""

        return [flow.stats for flow in self.flows]

    # Setup

    def _localize(self) -> None:
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            node.estimate = self.localizer(node)
        _LOGGER.debug(
            "Localized %d of %d nodes",
            sum(1 for n in self.nodes.values() if n.localized),
            len(self.nodes),
        )

    def _setup_transport(self) -> None:
        transport_config = self.config["transport"]
        for item in transport_config["entities"]:
            self.transport.register(item["entity"], item["node"], 0.0)
        for item in transport_config["migrations"]:
            self.sim.schedule(
                item["time"], self._migrate, item["entity"], item["node"],
                node=item["node"], module="transport", kind="migrate",
            )

    def _migrate(self, entity: int, node_id: int) -> None:
        self.transport.migrate(entity, node_id, self.sim.now)

    def _setup_traffic(self) -> None:
        for flow in self.flows:
            spec = flow.spec
            flow.timer = PeriodicTimer(
                self.sim,
                spec["period"],
                lambda flow=flow: self._generate(flow),
                first_at=spec["start"],
                module="traffic",
                kind=f"flow_{flow.index}",
            )

    def _setup_sampler(self) -> None:
        outputs = self.config["outputs"]
        if outputs["timeseries"]:
            self._sampler = PeriodicTimer(
                self.sim,
                outputs["sample_interval"],
                self._sample,
                first_at=0.0,
                module="metrics",
                kind="sample",
            )

    # Traffic

    def _pick_source(self, spec: Mapping[str, Any]) -> SensorNode | None:
        if "source_node" in spec:
            node = self.nodes[spec["source_node"]]
            return node if node.operational and node.localized else None
        region = spec["source_region"]
        center = Location(region["x"], region["y"])
        best: SensorNode | None = None
        best_distance = math.inf
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            if not (node.operational and node.localized):
                continue
            gap = distance(node.location, center)
            if gap <= region["radius"] and gap < best_distance:
                best, best_distance = node, gap
        return best

    def _generate(self, flow: FlowContext) -> None:
        spec = flow.spec
        now = self.sim.now
        if spec["stop"] is not None and now > spec["stop"] + TIME_EPSILON:
            if flow.timer is not None:
                flow.timer.cancel()
            return
        routing = self.params.routing
        if "source_entity" in spec:
            source = self.nodes[self.transport.directory.lookup(spec["source_entity"]).node]
            if not source.operational:
                flow.stats.skipped += 1
                return
            try:
                self.transport.send_to_entity(
                    spec["source_entity"],
                    spec["dest_entity"],
                    payload_bytes=spec["payload_bytes"],
                    deadline=now + spec["deadline"],
                    priority_class=spec["priority_class"],
                    now=now,
                    ttl=routing.ttl,
                    flow=flow.index,
                )
            except UnresolvableDestinationError:
                flow.stats.unresolvable += 1
            return

        source = self._pick_source(spec)
        if source is None:
            flow.stats.skipped += 1
            return
        dest_spec = spec["dest"]
        dest = Destination(Location(dest_spec["x"], dest_spec["y"]), dest_spec["radius"])
        if source.expected_delay(dest) > spec["deadline"]:
            flow.stats.infeasible += 1
        packet = self.ledger.create(
            source=source.node_id,
            source_node=source.node_id,
            dest=dest,
            deadline=now + spec["deadline"],
            priority_class=spec["priority_class"],
            payload_bytes=spec["payload_bytes"],
            now=now,
            ttl=routing.ttl,
            flow=flow.index,
        )
        source.originate(packet)

    def inject(
        self,
        source_node: int,
        dest: Destination,
        *,
        deadline: float,
        priority_class: int = 1,
        payload_bytes: int = 32,
    ) -> Packet:
        """Originate one packet at ``source_node`` now, outside any flow."""

        node = self.nodes[source_node]
        packet = self.ledger.create(
            source=source_node,
            source_node=source_node,
            dest=dest,
            deadline=self.sim.now + deadline,
            priority_class=priority_class,
            payload_bytes=payload_bytes,
            now=self.sim.now,
            ttl=self.params.routing.ttl,
        )
        node.originate(packet)
        return packet

    # Sampling

    def _sample(self) -> None:
        now = self.sim.now
        awake = [n for n in self.nodes.values() if n.operational]
        for node in self.nodes.values():
            node.settle()
        utilization = (
            math.fsum(n.link.utilization(now) for n in awake) / len(awake) if awake else 0.0
        )
        self.samples.append(
            TimeSample(
                time=now,
                utilization=utilization,
                energy=math.fsum(n.energy.consumed for n in self.nodes.values()),
                generated=self.ledger.generated,
                delivered=self.ledger.delivered,
                awake_nodes=len(awake),
            )
        )

    # Run

    def start(self) -> None:
        """Localize the nodes and arm every timer at time zero."""

        self._localize()
        for node_id in sorted(self.nodes):
            self.nodes[node_id].start()
        self._setup_transport()
        self.injector.schedule(
            build_failure_schedule(self.config["failures"], len(self.nodes), self.seed)
        )
        self._setup_traffic()
        self._setup_sampler()

    def run(self) -> RunMetrics:
        """Run the scenario for its configured duration and return the metrics."""

        if self._finished:
            raise RuntimeError("scenario already ran")
        _LOGGER.info(
            "Running %d nodes for %.3f s (seed %d)", len(self.nodes), self.duration, self.seed
        )
        self.start()
        self.sim.run(self.duration)
        for node in self.nodes.values():
            node.finalize()
        self._finished = True
        metrics = collect_metrics(self)
        _LOGGER.info(
            "Run finished after %d events: %d generated, %d delivered",
            self.sim.dispatched,
            metrics.packets["generated"],
            metrics.packets["delivered"],
        )
        return metrics
