"""Exceptions raised by the wsnstack simulator."""

from __future__ import annotations

from typing import Any

from .const import (
    ERROR_CAUSALITY,
    ERROR_CONFIG_INVALID,
    ERROR_MALFORMED_FRAME,
    ERROR_NO_ANCHORS,
    ERROR_NO_RUNS,
    ERROR_PARAMETER_PATH,
    ERROR_SCHEMA_MISMATCH,
    ERROR_UNKNOWN_ENTITY,
    ERROR_UNKNOWN_NODE,
    ERROR_UNRESOLVABLE,
)


class WsnStackError(Exception):
    """Base class for every error raised by the package."""

    code = "error"


class CausalityError(WsnStackError):
    """An event was scheduled before the current simulation time."""

    code = "causality"

    def __init__(self, at: float, now: float) -> None:
        super().__init__(ERROR_CAUSALITY.format(at=at, now=now))
        self.at = at
        self.now = now


class ConfigValidationError(WsnStackError):
    """The scenario configuration violates a constraint."""

    code = "config"

    def __init__(self, key: str, constraint: str) -> None:
        super().__init__(ERROR_CONFIG_INVALID.format(key=key, constraint=constraint))
        self.key = key
        self.constraint = constraint


class UnknownNodeError(ConfigValidationError):
    """A node id does not exist in the topology."""

    code = "unknown_node"

    def __init__(self, node: Any, key: str = "node") -> None:
        super().__init__(key, ERROR_UNKNOWN_NODE.format(node=node))
        self.node = node


class ParameterPathError(ConfigValidationError):
    """A dotted parameter path does not resolve in the configuration."""

    code = "parameter_path"

    def __init__(self, path: str) -> None:
        super().__init__(path, ERROR_PARAMETER_PATH.format(path=path))
        self.path = path


class NoAnchorsError(WsnStackError):
    """A centroid estimate was requested without any anchor beacon."""

    code = "no_anchors"

    def __init__(self) -> None:
        super().__init__(ERROR_NO_ANCHORS)


class MalformedFrameError(WsnStackError):
    """An aggregate frame could not be split back into units."""

    code = "malformed_frame"

    def __init__(self, reason: str) -> None:
        super().__init__(ERROR_MALFORMED_FRAME.format(reason=reason))
        self.reason = reason


class UnknownEntityError(WsnStackError):
    """An entity was migrated or addressed before being registered."""

    code = "unknown_entity"

    def __init__(self, entity: Any) -> None:
        super().__init__(ERROR_UNKNOWN_ENTITY.format(entity=entity))
        self.entity = entity


class UnresolvableDestinationError(WsnStackError):
    """The sender has no binding for the destination entity."""

    code = "unresolvable"

    def __init__(self, entity: Any) -> None:
        super().__init__(ERROR_UNRESOLVABLE.format(entity=entity))
        self.entity = entity


class SchemaMismatchError(WsnStackError):
    """A run directory was written with a different output schema."""

    code = "schema_mismatch"

    def __init__(self, path: str, found: Any, expected: Any) -> None:
        super().__init__(
            ERROR_SCHEMA_MISMATCH.format(path=path, found=found, expected=expected)
        )
        self.path = path


class NoRunsError(WsnStackError):
    """A report was requested without run directories."""

    code = "no_runs"

    def __init__(self) -> None:
        super().__init__(ERROR_NO_RUNS)
