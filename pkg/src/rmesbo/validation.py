"""Lightweight input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np

__all__ = ["as_float_array", "as_points", "check_finite", "check_positive"]


def as_float_array(x, name: str = "x") -> np.ndarray:
    """Convert to a float64 ndarray, rejecting non-numeric input."""
    arr = np.asarray(x, dtype=float)
    return arr


def check_finite(x, name: str = "x") -> np.ndarray:
    arr = as_float_array(x, name)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {arr!r}")
    return arr


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return value


def as_points(X, dim: int, name: str = "X") -> np.ndarray:
    """Coerce a point or stack of points to shape (n, dim)."""
    arr = as_float_array(X, name)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"{name} must have shape (n, {dim}), got {np.shape(X)}")
    return arr
