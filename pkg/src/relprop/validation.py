"""Small input-validation helpers shared by the public entry points."""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteFeatures


def check_finite(name: str, array) -> np.ndarray:
    out = np.asarray(array, dtype=float)
    if not np.isfinite(out).all():
        raise NonFiniteFeatures(f"{name} contains non-finite values")
    return out


def check_unit_interval(name: str, value: float, open_interval: bool = False) -> float:
    value = float(value)
    if open_interval and not (0.0 < value < 1.0):
        raise ValueError(f"{name} must lie strictly inside (0,1), got {value}")
    if not open_interval and not (0.0 <= value <= 1.0):
        raise ValueError(f"{name} must lie in [0,1], got {value}")
    return value


def check_positive(name: str, value: float) -> float:
    value = float(value)
    if value <= 0:
        raise ValueError(f"{name} must be strictly positive, got {value}")
    return value
