"""Concrete sensor node composed from the protocol layer mixins."""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any

from ..channel import RadioModel
from .aggregation import AggregationLayer, AggregationPolicy
from .mac import MacLayer, MacParams
from .power import (
    DutyCycleParams,
    EnergyParams,
    PowerLayer,
    SensingParams,
)
from .routing import RoutingLayer, RoutingParams
from .scheduler import QueueParams, SchedulerLayer

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class StackParams:
    """Every per-node protocol parameter of a scenario."""

    radio: RadioModel = field(default_factory=RadioModel)
    mac: MacParams = field(default_factory=MacParams)
    aggregation: AggregationPolicy = field(default_factory=AggregationPolicy)
    queue: QueueParams = field(default_factory=QueueParams)
    routing: RoutingParams = field(default_factory=RoutingParams)
    energy: EnergyParams = field(default_factory=EnergyParams)
    sensing: SensingParams = field(default_factory=SensingParams)
    duty_cycle: DutyCycleParams = field(default_factory=DutyCycleParams)

    @classmethod
    def from_config(cls, config: Mapping[str, Any]) -> StackParams:
        """Build the parameters from a validated scenario."""

        routing = RoutingParams.from_config(config["routing"])
        mac_section = dict(config["mac"])
        if mac_section.get("suspicion_timeout") is None:
            # Three missed beacons mark a neighbor as suspect.
            mac_section["suspicion_timeout"] = 3.0 * routing.beacon_period
        return cls(
            radio=RadioModel.from_config(config["radio"]),
            mac=MacParams.from_config(mac_section),
            aggregation=AggregationPolicy.from_config(config["aggregation"]),
            queue=QueueParams.from_config(config["queue"]),
            routing=routing,
            energy=EnergyParams.from_config(config["energy"]),
            sensing=SensingParams(**config["sensing"]),
            duty_cycle=DutyCycleParams(**config["duty_cycle"]),
        )


class SensorNode(
    RoutingLayer,
    SchedulerLayer,
    AggregationLayer,
    MacLayer,
    PowerLayer,
):
    """Sensor node running the full stack from routing down to power."""
