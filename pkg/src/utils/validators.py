# src/utils/validators.py
from __future__ import annotations

import math
from typing import Any, Optional

import numpy as np


def ensure_int(value: Any, must_be_positive: bool = False, minimum: Optional[int] = None) -> int:
    """
    Coerce `value` to int.

    Args:
        value: number or numeric string.
        must_be_positive: require > 0.
        minimum: optional inclusive lower bound.

    Raises:
        ValueError: not an integer, or outside the allowed range.
    """
    if isinstance(value, bool):
        raise ValueError(f"Expected an integer, got boolean {value!r}")
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"Expected an integer, got {value!r}")
        n = int(value)
    else:
        try:
            n = int(str(value).strip())
        except (TypeError, ValueError):
            raise ValueError(f"Expected an integer, got {value!r}")

    if must_be_positive and n <= 0:
        raise ValueError(f"Value must be > 0, got {n}")
    if minimum is not None and n < minimum:
        raise ValueError(f"Value must be >= {minimum}, got {n}")
    return n


def ensure_float(value: Any, name: str = "value") -> float:
    """Coerce `value` to a finite float, raising ValueError otherwise."""
    if isinstance(value, bool):
        raise ValueError(f"{name} must be a real number, got boolean {value!r}")
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be a real number, got {value!r}")
    if not math.isfinite(x):
        raise ValueError(f"{name} must be finite, got {x!r}")
    return x


def ensure_positive(value: Any, name: str = "value") -> float:
    x = ensure_float(value, name)
    if x <= 0:
        raise ValueError(f"{name} must be > 0, got {x}")
    return x


def ensure_nonnegative(value: Any, name: str = "value") -> float:
    x = ensure_float(value, name)
    if x < 0:
        raise ValueError(f"{name} must be >= 0, got {x}")
    return x


def ensure_symmetric(matrix: Any, name: str = "matrix", atol: float = 1e-12) -> np.ndarray:
    """
    Return `matrix` as a square float array, checking symmetry.

    Raises:
        ValueError: not square, or ‖M − Mᵀ‖ > atol.
    """
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    if np.max(np.abs(m - m.T), initial=0.0) > atol:
        raise ValueError(f"{name} must be symmetric")
    return m


def as_points(values: Any, dim: int, name: str = "points") -> np.ndarray:
    """Reshape `values` into a float array of shape (K, dim)."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim == 1 else arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"{name} must have shape (K, {dim}), got {arr.shape}")
    return arr


def as_vector(values: Any, dim: int, name: str = "vector") -> np.ndarray:
    """Flatten `values` into a float vector of length `dim`."""
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.shape[0] != dim:
        raise ValueError(f"{name} must have length {dim}, got {arr.shape[0]}")
    return arr
