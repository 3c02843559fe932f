"""Helper utilities shared across the wsnstack package."""

from __future__ import annotations

import json
import math
from collections.abc import Mapping, MutableMapping, Sequence
from dataclasses import dataclass
from typing import Any, NamedTuple

from scipy import stats

from .const import FLOAT_DIGITS
from .exceptions import ParameterPathError


class Location(NamedTuple):
    """Planar position in meters."""

    x: float
    y: float


@dataclass(frozen=True, slots=True)
class Area:
    """Axis-aligned deployment rectangle anchored at the origin."""

    width: float
    height: float

    def contains(self, location: Location) -> bool:
        """Return ``True`` if ``location`` lies inside the rectangle."""

        return 0.0 <= location.x <= self.width and 0.0 <= location.y <= self.height

    def clamp(self, location: Location) -> Location:
        """Return ``location`` projected into the rectangle."""

        return Location(
            clamp(location.x, 0.0, self.width), clamp(location.y, 0.0, self.height)
        )


def distance(a: Location, b: Location) -> float:
    """Return the Euclidean distance between ``a`` and ``b``."""

    return math.hypot(a.x - b.x, a.y - b.y)


def in_range(a: Location, b: Location, r: float) -> bool:
    """Return ``True`` iff ``a`` and ``b`` are at most ``r`` meters apart."""

    if r < 0:
        raise ValueError(f"range must be non-negative, got {r}")
    return distance(a, b) <= r


def clamp(value: float, low: float, high: float) -> float:
    """Return ``value`` limited to ``[low, high]``."""

    return max(low, min(high, value))


def in_sector(
    origin: Location, toward: Location, point: Location, half_angle: float
) -> bool:
    """Return ``True`` if ``point`` lies in the sector around ``origin -> toward``.

    ``half_angle`` is in degrees. A degenerate axis (``origin == toward``)
    admits every direction.
    """

    axis = (toward.x - origin.x, toward.y - origin.y)
    ray = (point.x - origin.x, point.y - origin.y)
    axis_len = math.hypot(*axis)
    ray_len = math.hypot(*ray)
    if axis_len == 0.0 or ray_len == 0.0:
        return True
    cos_angle = (axis[0] * ray[0] + axis[1] * ray[1]) / (axis_len * ray_len)
    return cos_angle >= math.cos(math.radians(half_angle)) - 1e-12


def path_index(part: str, size: int) -> int | None:
    """Return the list position named by one dotted-path segment.

    ``traffic.0.period`` addresses the first traffic entry. ``None`` means
    ``part`` is not a plain decimal position inside a list of ``size`` items,
    so signed or padded segments are rejected.
    """

    if not part.isdecimal():
        return None
    index = int(part)
    return index if index < size else None


def round_float(value: float) -> float:
    """Round ``value`` to the package-wide number of significant digits."""

    if not math.isfinite(value):
        return value
    return float(f"{value:.{FLOAT_DIGITS}g}")


def format_float(value: float) -> str:
    """Format ``value`` with a fixed number of significant digits."""

    return f"{value:.{FLOAT_DIGITS}g}"


def normalize_for_json(data: Any) -> Any:
    """Return ``data`` with every float rounded for byte-stable JSON."""

    if isinstance(data, Mapping):
        return {str(key): normalize_for_json(value) for key, value in data.items()}
    if isinstance(data, (list, tuple)):
        return [normalize_for_json(item) for item in data]
    if isinstance(data, float):
        if math.isnan(data):
            return None
        return round_float(data)
    return data


def get_path(data: Mapping[str, Any], path: str) -> Any:
    """Return the value at dotted ``path`` inside ``data``."""

    current: Any = data
    for part in path.split("."):
        if isinstance(current, Mapping) and part in current:
            current = current[part]
            continue
        if isinstance(current, list) and (index := path_index(part, len(current))) is not None:
            current = current[index]
            continue
        raise ParameterPathError(path)
    return current


def set_path(data: MutableMapping[str, Any], path: str, value: Any) -> None:
    """Set dotted ``path`` inside ``data``, creating mapping levels as needed.

    List elements are addressed by index and must already exist.
    """

    parts = path.split(".")
    current: Any = data
    for part in parts[:-1]:
        if isinstance(current, list):
            index = path_index(part, len(current))
            if index is None:
                raise ParameterPathError(path)
            current = current[index]
        elif isinstance(current, MutableMapping):
            current = current.setdefault(part, {})
        else:
            raise ParameterPathError(path)
    last = parts[-1]
    if isinstance(current, list):
        index = path_index(last, len(current))
        if index is None:
            raise ParameterPathError(path)
        current[index] = value
    elif isinstance(current, MutableMapping):
        current[last] = value
    else:
        raise ParameterPathError(path)


def parse_override(text: str) -> tuple[str, Any]:
    """Split ``key=value`` and decode the value as JSON when possible."""

    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ParameterPathError(text)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def rank_correlation(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    """Return the Spearman rank correlation of ``xs`` and ``ys``.

    ``None`` is returned when the correlation is undefined (fewer than two
    points or a constant series).
    """

    if len(xs) < 2 or len(set(xs)) < 2 or len(set(ys)) < 2:
        return None
    result = stats.spearmanr(xs, ys)
    value = float(result.statistic)
    if math.isnan(value):
        return None
    return value
