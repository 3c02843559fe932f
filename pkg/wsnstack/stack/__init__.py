"""Per-node protocol stack."""

from ._base import BaseNode, NodeContext
from .aggregation import AggregationPolicy, AidaFrame, AidaUnit
from .mac import Delivered, Failed, MacParams
from .node import SensorNode, StackParams
from .power import DutyCycleParams, EnergyParams, EnergyRates, SensingParams
from .routing import NeighborEntry, RoutingParams
from .scheduler import QueueParams

__all__ = [
    "AggregationPolicy",
    "AidaFrame",
    "AidaUnit",
    "BaseNode",
    "Delivered",
    "DutyCycleParams",
    "EnergyParams",
    "EnergyRates",
    "Failed",
    "MacParams",
    "NeighborEntry",
    "NodeContext",
    "QueueParams",
    "RoutingParams",
    "SensingParams",
    "SensorNode",
    "StackParams",
]
