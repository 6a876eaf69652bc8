"""Unit-tagged YAML scenario documents.

Quantities are written either as bare numbers (taken in the canonical SI
unit of the field) or as ``"<value> <unit>"`` strings, e.g. ``"32 deg"``.
A unit that does not belong to the field's dimension is a fatal error.
"""
from __future__ import annotations

import math
import re
from typing import Any, Dict

CANONICAL = {
    "length": "m",
    "time": "s",
    "speed": "m/s",
    "angle": "rad",
    "mass": "kg",
    "force": "N",
    "inertia": "kg*m^2",
    "area": "m^2",
    "density": "kg/m^3",
    "accel": "m/s^2",
    "thrust_coeff": "N/%",
    "torque_coeff": "N*m/%",
    "percent": "%",
    "per_rad": "1/rad",
    "rate": "rad/s",
    "dimensionless": "",
}

_FACTORS = {
    "length": {"m": 1.0, "km": 1000.0, "ft": 0.3048, "cm": 0.01},
    "time": {"s": 1.0, "ms": 1e-3, "min": 60.0},
    "speed": {"m/s": 1.0, "km/h": 1 / 3.6, "kn": 0.514444, "kt": 0.514444},
    "angle": {"rad": 1.0, "deg": math.pi / 180.0},
    "mass": {"kg": 1.0, "g": 1e-3},
    "force": {"N": 1.0},
    "inertia": {"kg*m^2": 1.0, "kg m^2": 1.0},
    "area": {"m^2": 1.0},
    "density": {"kg/m^3": 1.0},
    "accel": {"m/s^2": 1.0},
    "thrust_coeff": {"N/%": 1.0},
    "torque_coeff": {"N*m/%": 1.0, "N m/%": 1.0},
    "percent": {"%": 1.0},
    "per_rad": {"1/rad": 1.0, "1/deg": 180.0 / math.pi},
    "rate": {"rad/s": 1.0, "deg/s": math.pi / 180.0},
    "dimensionless": {"": 1.0},
}

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(.*?)\s*$")


class ConfigError(ValueError):
    """Schema or unit violation, carrying the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def parse_quantity(value: Any, dimension: str, path: str = "") -> float:
    if isinstance(value, bool):
        raise ConfigError(path, "expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(path, f"expected a quantity, got {type(value).__name__}")
    m = _QUANTITY.match(value)
    if not m:
        raise ConfigError(path, f"cannot parse quantity {value!r}")
    number, unit = float(m.group(1)), m.group(2)
    table = _FACTORS[dimension]
    if unit == "":
        return number
    if unit not in table:
        allowed = ", ".join(u for u in table if u) or "none"
        raise ConfigError(path, f"unit {unit!r} not valid for {dimension} (allowed: {allowed})")
    return number * table[unit]


def format_quantity(value: float, dimension: str) -> Any:
    unit = CANONICAL[dimension]
    return float(value) if not unit else f"{float(value)!r} {unit}"


def parse_section(doc: Any, schema: Dict[str, str], path: str) -> Dict[str, Any]:
    """Convert a mapping of tagged quantities; unknown keys are rejected."""
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected a mapping")
    out = {}
    for key, raw in doc.items():
        if key not in schema:
            raise ConfigError(f"{path}.{key}", f"unknown field (expected one of {sorted(schema)})")
        dim = schema[key]
        sub = f"{path}.{key}"
        if dim.startswith("list:"):
            inner = dim[5:]
            if not isinstance(raw, (list, tuple)):
                raise ConfigError(sub, "expected a list")
            out[key] = [parse_quantity(v, inner, f"{sub}[{i}]") for i, v in enumerate(raw)]
        elif dim.startswith("matrix:"):
            inner = dim[7:]
            if not isinstance(raw, (list, tuple)):
                raise ConfigError(sub, "expected a list of rows")
            out[key] = [[parse_quantity(v, inner, f"{sub}[{i}][{j}]") for j, v in enumerate(row)]
                        for i, row in enumerate(raw)]
        elif dim == "table":
            # constant or list of [airspeed, value] pairs
            if isinstance(raw, (list, tuple)):
                out[key] = [(parse_quantity(a, "speed", f"{sub}[{i}][0]"),
                             parse_quantity(b, "per_rad", f"{sub}[{i}][1]"))
                            for i, (a, b) in enumerate(raw)]
            else:
                out[key] = parse_quantity(raw, "per_rad", sub)
        else:
            out[key] = parse_quantity(raw, dim, sub)
    return out
