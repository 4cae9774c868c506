# src/models/sampling.py
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional

import numpy as np

from src.measures.empirical import EmpiricalMeasure
from src.utils.validators import ensure_int, ensure_nonnegative, ensure_positive


@dataclass(frozen=True)
class SamplerConfig:
    """
    Gaussian sampler for points, noise states, clouds and field values.

    Clouds are `mean + spread * N(0, I)` with mean ~ N(0, mean_scale²) and
    spread ~ U[spread_min, spread_max]. On the torus, points are uniform and
    clouds are wrapped Gaussians around a uniform centre.
    """
    x_scale: float = 1.0
    theta_scale: float = 1.0
    w_scale: float = 1.0
    mean_scale: float = 0.5
    spread_min: float = 0.5
    spread_max: float = 1.0
    cloud_size: int = 32

    def __post_init__(self) -> None:
        ensure_positive(self.x_scale, "x_scale")
        ensure_nonnegative(self.theta_scale, "theta_scale")
        ensure_nonnegative(self.w_scale, "w_scale")
        ensure_nonnegative(self.mean_scale, "mean_scale")
        lo = ensure_nonnegative(self.spread_min, "spread_min")
        hi = ensure_nonnegative(self.spread_max, "spread_max")
        if hi < lo:
            raise ValueError(f"spread_max ({hi}) must be >= spread_min ({lo})")
        ensure_int(self.cloud_size, must_be_positive=True)

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "SamplerConfig":
        return cls(**(data or {}))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    # ------------------------------
    # Draws
    # ------------------------------
    def points(self, rng: np.random.Generator, k: int, dim: int, period: Optional[float] = None) -> np.ndarray:
        if period is not None:
            return rng.uniform(0.0, period, size=(k, dim))
        return self.x_scale * rng.standard_normal((k, dim))

    def theta(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.theta_scale * rng.standard_normal(n)

    def values(self, rng: np.random.Generator, k: int, dim: int) -> np.ndarray:
        return self.w_scale * rng.standard_normal((k, dim))

    def cloud_points(self, rng: np.random.Generator, size: int, dim: int, period: Optional[float] = None) -> np.ndarray:
        spread = rng.uniform(self.spread_min, self.spread_max)
        if period is not None:
            centre = rng.uniform(0.0, period, size=dim)
            return centre + 0.25 * period * spread * rng.standard_normal((size, dim))
        centre = self.mean_scale * rng.standard_normal(dim)
        return centre + self.x_scale * spread * rng.standard_normal((size, dim))

    def cloud(self, rng: np.random.Generator, dim: int, period: Optional[float] = None, size: Optional[int] = None) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.cloud_points(rng, size or self.cloud_size, dim, period), period)
