"""Scenario configuration schema and loading."""

from __future__ import annotations

import copy
import json
import logging
from collections.abc import Iterable, Mapping
from pathlib import Path
from typing import Any

import voluptuous as vol

from .const import (
    AGGREGATION_MODE,
    DIRECTORY_MODE,
    FAILURE_KIND,
    LOCALIZATION_METHOD,
    ROUTING_MODE,
    SCHEMA_VERSION,
)
from .exceptions import ConfigValidationError, UnknownNodeError
from .helpers import Area, Location, get_path, parse_override, set_path
from .localization import LocalizationParams
from .stack import StackParams
from .transport import TransportParams

_LOGGER = logging.getLogger(__name__)

_POSITIVE = vol.All(vol.Coerce(float), vol.Range(min=0, min_included=False))
_NON_NEGATIVE = vol.All(vol.Coerce(float), vol.Range(min=0))
_FRACTION = vol.All(vol.Coerce(float), vol.Range(min=0, max=1))
_COUNT = vol.All(vol.Coerce(int), vol.Range(min=1))
_NON_NEGATIVE_INT = vol.All(vol.Coerce(int), vol.Range(min=0))
_POINT = vol.All([vol.Coerce(float)], vol.Length(min=2, max=2))


def _one_of(namespace: Any) -> vol.In:
    return vol.In(sorted(vars(namespace).values()))


def _section(fields: Mapping[Any, Any]) -> vol.Schema:
    return vol.Schema(fields, extra=vol.PREVENT_EXTRA)


REGION_SCHEMA = _section(
    {
        vol.Required("x"): vol.Coerce(float),
        vol.Required("y"): vol.Coerce(float),
        vol.Optional("radius", default=0.0): _NON_NEGATIVE,
    }
)

TOPOLOGY_SCHEMA = _section(
    {
        vol.Optional("count", default=100): _COUNT,
        vol.Optional("width", default=200.0): _POSITIVE,
        vol.Optional("height", default=200.0): _POSITIVE,
        vol.Optional("anchor_fraction", default=0.1): _FRACTION,
        vol.Optional("positions", default=None): vol.Any(None, [_POINT]),
    }
)

RADIO_SCHEMA = _section(
    {
        vol.Optional("range", default=40.0): _POSITIVE,
        vol.Optional("bitrate", default=250_000.0): _POSITIVE,
        vol.Optional("loss_probability", default=0.0): _FRACTION,
    }
)

MAC_SCHEMA = _section(
    {
        vol.Optional("slot_time", default=320e-6): _POSITIVE,
        vol.Optional("cw_min", default=8): _COUNT,
        vol.Optional("cw_max", default=64): _COUNT,
        vol.Optional("retry_limit", default=3): _NON_NEGATIVE_INT,
        vol.Optional("ack_timeout", default=2e-3): _POSITIVE,
        vol.Optional("header_bytes", default=16): _NON_NEGATIVE_INT,
        vol.Optional("reliable", default=True): vol.Boolean(),
        vol.Optional("delay_alpha", default=0.3): vol.All(
            vol.Coerce(float), vol.Range(min=0, max=1, min_included=False)
        ),
        vol.Optional("utilization_window", default=1.0): _POSITIVE,
        vol.Optional("suspicion_timeout", default=None): vol.Any(None, _POSITIVE),
    }
)

AGGREGATION_SCHEMA = _section(
    {
        vol.Optional("mode", default=AGGREGATION_MODE.NONE): _one_of(AGGREGATION_MODE),
        vol.Optional("degree", default=4): _COUNT,
        vol.Optional("max_degree", default=8): _COUNT,
        vol.Optional("flush_timer", default=0.02): _POSITIVE,
        vol.Optional("guard", default=None): vol.Any(None, _NON_NEGATIVE),
        vol.Optional("u_low", default=0.4): _FRACTION,
        vol.Optional("u_high", default=0.7): _FRACTION,
        vol.Optional("capacity", default=64): _COUNT,
        vol.Optional("length_field_bytes", default=2): _NON_NEGATIVE_INT,
    }
)

QUEUE_SCHEMA = _section({vol.Optional("capacity", default=64): _COUNT})

ROUTING_SCHEMA = _section(
    {
        vol.Optional("mode", default=ROUTING_MODE.TABLE_DRIVEN): _one_of(ROUTING_MODE),
        vol.Optional("speed_setpoint", default=1000.0): _POSITIVE,
        vol.Optional("weight_exponent", default=2.0): _NON_NEGATIVE,
        vol.Optional("beacon_period", default=1.0): _POSITIVE,
        vol.Optional("neighbor_timeout", default=3.0): _POSITIVE,
        vol.Optional("min_delay", default=1e-3): _POSITIVE,
        vol.Optional("ttl", default=32): _COUNT,
        vol.Optional("sector_half_angle", default=60.0): vol.All(
            vol.Coerce(float), vol.Range(min=0, max=90, min_included=False)
        ),
        vol.Optional("cts_window", default=0.01): _POSITIVE,
        vol.Optional("admission_threshold", default=0.9): _FRACTION,
        vol.Optional("backpressure_factor", default=2.0): vol.All(
            vol.Coerce(float), vol.Range(min=1)
        ),
        vol.Optional("miss_alpha", default=0.1): _FRACTION,
        vol.Optional("greedy", default=False): vol.Boolean(),
        vol.Optional("highest_class", default=2): _NON_NEGATIVE_INT,
        vol.Optional("reroute_limit", default=1): _NON_NEGATIVE_INT,
        vol.Optional("probe_retries", default=1): _NON_NEGATIVE_INT,
        vol.Optional("beacon_bytes", default=32): _COUNT,
        vol.Optional("probe_bytes", default=32): _COUNT,
        vol.Optional("response_bytes", default=24): _COUNT,
        vol.Optional("backpressure_bytes", default=24): _COUNT,
        vol.Optional("network_header_bytes", default=16): _NON_NEGATIVE_INT,
    }
)

ENERGY_SCHEMA = _section(
    {
        vol.Optional("initial_budget", default=1000.0): _POSITIVE,
        vol.Optional("cpu_time_per_packet", default=1e-4): _NON_NEGATIVE,
        vol.Optional("rates", default=dict): _section(
            {
                vol.Optional("tx", default=60.0): _NON_NEGATIVE,
                vol.Optional("rx", default=45.0): _NON_NEGATIVE,
                vol.Optional("idle", default=12.0): _NON_NEGATIVE,
                vol.Optional("sleep", default=0.03): _NON_NEGATIVE,
                vol.Optional("cpu", default=6.0): _NON_NEGATIVE,
            }
        ),
    }
)

SENSING_SCHEMA = _section(
    {
        vol.Optional("sensing_radius", default=10.0): _POSITIVE,
        vol.Optional("grid_resolution", default=2.5): _POSITIVE,
    }
)

DUTY_CYCLE_SCHEMA = _section(
    {
        vol.Optional("enabled", default=False): vol.Boolean(),
        vol.Optional("check_period", default=1.0): _POSITIVE,
        vol.Optional("sleep_duration", default=2.0): _POSITIVE,
    }
)

LOCALIZATION_SCHEMA = _section(
    {
        vol.Optional("method", default=LOCALIZATION_METHOD.CENTROID): _one_of(
            LOCALIZATION_METHOD
        ),
        vol.Optional("sigma", default=0.0): _NON_NEGATIVE,
        vol.Optional("fallback_sigma", default=None): vol.Any(None, _NON_NEGATIVE),
        vol.Optional("grid_resolution", default=2.0): _POSITIVE,
        vol.Optional("max_triangles", default=64): _COUNT,
    }
)

TRANSPORT_SCHEMA = _section(
    {
        vol.Optional("directory", default=DIRECTORY_MODE.REGIONAL): _one_of(DIRECTORY_MODE),
        vol.Optional("stale_window", default=10.0): _NON_NEGATIVE,
        vol.Optional("rebind_radius", default=20.0): _NON_NEGATIVE,
        vol.Optional("rebind_budget", default=1): _NON_NEGATIVE_INT,
        vol.Optional("dissemination_delay", default=0.0): _NON_NEGATIVE,
        vol.Optional("reorder_capacity", default=16): _COUNT,
        vol.Optional("entities", default=list): [
            _section(
                {
                    vol.Required("entity"): _NON_NEGATIVE_INT,
                    vol.Required("node"): _NON_NEGATIVE_INT,
                }
            )
        ],
        vol.Optional("migrations", default=list): [
            _section(
                {
                    vol.Required("entity"): _NON_NEGATIVE_INT,
                    vol.Required("time"): _NON_NEGATIVE,
                    vol.Required("node"): _NON_NEGATIVE_INT,
                }
            )
        ],
    }
)

FLOW_SCHEMA = _section(
    {
        vol.Optional("source_region"): REGION_SCHEMA,
        vol.Optional("source_node"): _NON_NEGATIVE_INT,
        vol.Optional("source_entity"): _NON_NEGATIVE_INT,
        vol.Optional("dest"): REGION_SCHEMA,
        vol.Optional("dest_entity"): _NON_NEGATIVE_INT,
        vol.Optional("period", default=0.1): _POSITIVE,
        vol.Optional("payload_bytes", default=32): _COUNT,
        vol.Optional("deadline", default=0.5): _POSITIVE,
        vol.Optional("priority_class", default=1): _NON_NEGATIVE_INT,
        vol.Optional("start", default=0.0): _NON_NEGATIVE,
        vol.Optional("stop", default=None): vol.Any(None, _NON_NEGATIVE),
    }
)

FAILURES_SCHEMA = _section(
    {
        vol.Optional("schedule", default=list): [
            _section(
                {
                    vol.Required("node"): _NON_NEGATIVE_INT,
                    vol.Required("time"): _NON_NEGATIVE,
                    vol.Required("kind"): _one_of(FAILURE_KIND),
                    vol.Optional("location"): _POINT,
                }
            )
        ],
        vol.Optional("random_crash", default=None): vol.Any(
            None,
            _section(
                {
                    vol.Required("fraction"): _FRACTION,
                    vol.Required("time"): _NON_NEGATIVE,
                }
            ),
        ),
    }
)

OUTPUTS_SCHEMA = _section(
    {
        vol.Optional("sample_interval", default=1.0): _POSITIVE,
        vol.Optional("timeseries", default=True): vol.Boolean(),
        vol.Optional("packets", default=True): vol.Boolean(),
        vol.Optional("events", default=False): vol.Boolean(),
        vol.Optional("receptions", default=False): vol.Boolean(),
    }
)

SCENARIO_SCHEMA = _section(
    {
        vol.Optional("schema_version", default=SCHEMA_VERSION): vol.All(
            vol.Coerce(int), vol.In([SCHEMA_VERSION])
        ),
        vol.Optional("seed", default=1): _NON_NEGATIVE_INT,
        vol.Optional("duration", default=30.0): _POSITIVE,
        vol.Optional("topology", default=dict): TOPOLOGY_SCHEMA,
        vol.Optional("radio", default=dict): RADIO_SCHEMA,
        vol.Optional("mac", default=dict): MAC_SCHEMA,
        vol.Optional("aggregation", default=dict): AGGREGATION_SCHEMA,
        vol.Optional("queue", default=dict): QUEUE_SCHEMA,
        vol.Optional("routing", default=dict): ROUTING_SCHEMA,
        vol.Optional("energy", default=dict): ENERGY_SCHEMA,
        vol.Optional("sensing", default=dict): SENSING_SCHEMA,
        vol.Optional("duty_cycle", default=dict): DUTY_CYCLE_SCHEMA,
        vol.Optional("localization", default=dict): LOCALIZATION_SCHEMA,
        vol.Optional("transport", default=dict): TRANSPORT_SCHEMA,
        vol.Optional("traffic", default=list): [FLOW_SCHEMA],
        vol.Optional("failures", default=dict): FAILURES_SCHEMA,
        vol.Optional("outputs", default=dict): OUTPUTS_SCHEMA,
    }
)


def _check_region(area: Area, region: Mapping[str, Any], key: str) -> None:
    if not area.contains(Location(region["x"], region["y"])):
        raise ConfigValidationError(key, "region center must lie inside the area")


def _check_node(node: int, count: int, key: str) -> None:
    if not 0 <= node < count:
        raise UnknownNodeError(node, key)


def _cross_check(config: Mapping[str, Any]) -> None:
    topology = config["topology"]
    count = topology["count"]
    area = Area(topology["width"], topology["height"])
    positions = topology["positions"]
    if positions is not None:
        if len(positions) != count:
            raise ConfigValidationError(
                "topology.positions", "one position per node is required"
            )
        for index, point in enumerate(positions):
            if not area.contains(Location(*point)):
                raise ConfigValidationError(
                    f"topology.positions.{index}", "position must lie inside the area"
                )

    entities = {item["entity"] for item in config["transport"]["entities"]}
    for index, item in enumerate(config["transport"]["entities"]):
        _check_node(item["node"], count, f"transport.entities.{index}.node")
    for index, item in enumerate(config["transport"]["migrations"]):
        _check_node(item["node"], count, f"transport.migrations.{index}.node")
        if item["entity"] not in entities:
            raise ConfigValidationError(
                f"transport.migrations.{index}.entity", "entity is not registered"
            )

    for index, flow in enumerate(config["traffic"]):
        key = f"traffic.{index}"
        sources = [k for k in ("source_region", "source_node", "source_entity") if k in flow]
        if len(sources) != 1:
            raise ConfigValidationError(
                key, "exactly one of source_region, source_node, source_entity is required"
            )
        targets = [k for k in ("dest", "dest_entity") if k in flow]
        if len(targets) != 1:
            raise ConfigValidationError(key, "exactly one of dest, dest_entity is required")
        if ("source_entity" in flow) != ("dest_entity" in flow):
            raise ConfigValidationError(
                key, "entity flows need both source_entity and dest_entity"
            )
        for name in ("source_entity", "dest_entity"):
            if name in flow and flow[name] not in entities:
                raise ConfigValidationError(f"{key}.{name}", "entity is not registered")
        if "source_region" in flow:
            _check_region(area, flow["source_region"], f"{key}.source_region")
        if "source_node" in flow:
            _check_node(flow["source_node"], count, f"{key}.source_node")
        if "dest" in flow:
            _check_region(area, flow["dest"], f"{key}.dest")
        if flow["stop"] is not None and flow["stop"] < flow["start"]:
            raise ConfigValidationError(f"{key}.stop", "stop must not precede start")

    for index, entry in enumerate(config["failures"]["schedule"]):
        key = f"failures.schedule.{index}"
        _check_node(entry["node"], count, f"{key}.node")
        if entry["kind"] == FAILURE_KIND.MOVE_TO:
            if "location" not in entry:
                raise ConfigValidationError(f"{key}.location", "move_to needs a location")
            if not area.contains(Location(*entry["location"])):
                raise ConfigValidationError(
                    f"{key}.location", "location must lie inside the area"
                )

    for section, build in (
        ("stack", StackParams.from_config),
        ("localization", lambda c: LocalizationParams.from_config(c["localization"])),
        ("transport", lambda c: TransportParams.from_config(c["transport"])),
    ):
        try:
            build(config)
        except ValueError as err:
            raise ConfigValidationError(section, str(err)) from err


def validate_config(data: Mapping[str, Any]) -> dict[str, Any]:
    """Return the validated scenario with every default filled in."""

    try:
        config = SCENARIO_SCHEMA(copy.deepcopy(dict(data)))
    except vol.MultipleInvalid as err:
        first = err.errors[0]
        key = ".".join(str(part) for part in first.path) or "config"
        raise ConfigValidationError(key, first.error_message) from err
    _cross_check(config)
    return config


def reference_scenario() -> dict[str, Any]:
    """Return the built-in 100-node scenario with two crossing flows."""

    flow = {
        "period": 0.1,
        "payload_bytes": 32,
        "deadline": 0.5,
        "priority_class": 1,
        "start": 2.0,
        "stop": 28.0,
    }
    return validate_config(
        {
            "duration": 30.0,
            "topology": {"count": 100, "width": 200.0, "height": 200.0, "anchor_fraction": 0.1},
            "radio": {"range": 40.0},
            "traffic": [
                {
                    **flow,
                    "source_region": {"x": 20.0, "y": 100.0, "radius": 20.0},
                    "dest": {"x": 180.0, "y": 100.0, "radius": 20.0},
                },
                {
                    **flow,
                    "source_region": {"x": 100.0, "y": 20.0, "radius": 20.0},
                    "dest": {"x": 100.0, "y": 180.0, "radius": 20.0},
                },
            ],
        }
    )


def load_config(path: str | Path) -> dict[str, Any]:
    """Read and validate a scenario file."""

    try:
        with Path(path).open("r", encoding="utf-8") as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigValidationError(str(path), f"unreadable scenario file: {err}") from err
    if not isinstance(data, dict):
        raise ConfigValidationError(str(path), "scenario must be a JSON object")
    return validate_config(data)


def apply_overrides(config: Mapping[str, Any], overrides: Iterable[str]) -> dict[str, Any]:
    """Apply ``key=value`` overrides and re-validate."""

    updated = copy.deepcopy(dict(config))
    for text in overrides:
        key, value = parse_override(text)
        set_path(updated, key, value)
        _LOGGER.debug("Override %s=%r", key, value)
    return validate_config(updated)


def with_parameter(config: Mapping[str, Any], path: str, value: Any) -> dict[str, Any]:
    """Return ``config`` with the existing parameter at ``path`` set to ``value``."""

    get_path(config, path)
    updated = copy.deepcopy(dict(config))
    set_path(updated, path, value)
    return validate_config(updated)
