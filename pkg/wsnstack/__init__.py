"""Discrete-event sensor network simulator and protocol stack."""

from __future__ import annotations

from .config import load_config, reference_scenario, validate_config
from .const import VERSION
from .coordinator import ScenarioCoordinator
from .harness import async_sweep, report, run_scenario, sweep
from .metrics import RunMetrics

__version__ = VERSION

__all__ = [
    "RunMetrics",
    "ScenarioCoordinator",
    "async_sweep",
    "load_config",
    "reference_scenario",
    "report",
    "run_scenario",
    "sweep",
    "validate_config",
]
