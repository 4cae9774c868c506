# src/measures/empirical.py
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Any, List, Optional

import numpy as np


class DimensionMismatchError(ValueError):
    """Raised when two objects that must share a dimension (or domain) do not."""


def reduce_to_torus(points: np.ndarray, period: float) -> np.ndarray:
    """Map coordinates into [0, period)."""
    reduced = np.mod(points, period)
    # np.mod can return `period` itself for tiny negative inputs
    reduced[reduced >= period] = 0.0
    return reduced


@dataclass(frozen=True)
class EmpiricalMeasure:
    """
    Uniform-weight particle cloud on ℝ^d or on the torus [0, L)^d.

    `points` is stored as a read-only float array of shape (N, d).
    """
    points: np.ndarray
    period: Optional[float] = None

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"EmpiricalMeasure needs at least one point of dimension >= 1, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("EmpiricalMeasure points must be finite")
        period = self.period
        if period is not None:
            period = float(period)
            if period <= 0:
                raise ValueError(f"Torus period must be > 0, got {period}")
            pts = reduce_to_torus(pts, period)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "period", period)

    # ------------------------------
    # Basic properties
    # ------------------------------
    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def is_torus(self) -> bool:
        return self.period is not None

    def mean(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def second_moment(self) -> float:
        """mean |x|², the second feature moment used by field regressions."""
        return float(np.mean(np.sum(self.points ** 2, axis=1)))

    def same_space(self, other: "EmpiricalMeasure") -> bool:
        return self.dim == other.dim and self.period == other.period

    def with_points(self, points: np.ndarray) -> "EmpiricalMeasure":
        return EmpiricalMeasure(points, self.period)

    # ------------------------------
    # Serialization
    # ------------------------------
    def to_csv_text(self) -> str:
        """Header `x0,...,x{d-1}`, one particle per row, floats written with repr."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"x{j}" for j in range(self.dim)])
        for row in self.points:
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv_text(cls, text: str, period: Optional[float] = None) -> "EmpiricalMeasure":
        reader = csv.reader(io.StringIO(text))
        rows = [r for r in reader if r]
        if len(rows) < 2:
            raise ValueError("Particle CSV needs a header and at least one row")
        header, body = rows[0], rows[1:]
        try:
            pts = [[float(v) for v in r] for r in body]
        except ValueError:
            raise ValueError("Particle CSV contains a non-numeric entry")
        if any(len(r) != len(header) for r in pts):
            raise DimensionMismatchError("Particle CSV rows do not match the header width")
        return cls(np.asarray(pts), period)

    def to_json_text(self) -> str:
        return json.dumps([[float(v) for v in row] for row in self.points])

    @classmethod
    def from_json_text(cls, text: str, period: Optional[float] = None) -> "EmpiricalMeasure":
        data = json.loads(text)
        if not isinstance(data, list) or not data:
            raise ValueError("Particle JSON must be a non-empty array of arrays")
        widths = {len(row) if isinstance(row, list) else -1 for row in data}
        if len(widths) != 1 or -1 in widths:
            raise DimensionMismatchError("Particle JSON rows must be arrays of equal length")
        return cls(np.asarray(data, dtype=float), period)

    def to_list(self) -> List[List[float]]:
        return [[float(v) for v in row] for row in self.points]


@dataclass(frozen=True)
class Coupling:
    """K point pairs (x_i, y_i) with uniform weight 1/K."""
    x: np.ndarray
    y: np.ndarray
    period: Optional[float] = None

    def __post_init__(self) -> None:
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if y.ndim == 1:
            y = y.reshape(-1, 1)
        if x.shape != y.shape or x.ndim != 2 or x.shape[0] < 1:
            raise DimensionMismatchError(f"Coupling sides must share a shape (K, d), got {x.shape} and {y.shape}")
        if self.period is not None:
            x = reduce_to_torus(x, float(self.period))
            y = reduce_to_torus(y, float(self.period))
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def size(self) -> int:
        return int(self.x.shape[0])

    @property
    def dim(self) -> int:
        return int(self.x.shape[1])

    @property
    def first_marginal(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.x, self.period)

    @property
    def second_marginal(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.y, self.period)

    def displacement(self) -> np.ndarray:
        """x_i − y_i, taken as the shortest periodic representative on the torus."""
        diff = self.x - self.y
        if self.period is not None:
            L = self.period
            diff = diff - L * np.round(diff / L)
        return diff

    def cost(self, q: float) -> float:
        """(1/K) Σ |x_i − y_i|^q with the per-axis periodic distance on the torus."""
        return float(np.mean(pair_distances(self.x, self.y, self.period) ** q))

    def to_dict(self) -> dict[str, Any]:
        return {"x": self.x.tolist(), "y": self.y.tolist(), "period": self.period}


def axis_gaps(a: np.ndarray, b: np.ndarray, period: Optional[float]) -> np.ndarray:
    """Per-axis |a − b|, or min(|a − b|, L − |a − b|) on the torus."""
    gap = np.abs(a - b)
    if period is not None:
        gap = np.minimum(gap, period - gap)
    return gap


def pair_distances(x: np.ndarray, y: np.ndarray, period: Optional[float]) -> np.ndarray:
    """Euclidean norm of the per-axis gaps for aligned rows of x and y."""
    return np.sqrt(np.sum(axis_gaps(x, y, period) ** 2, axis=1))
