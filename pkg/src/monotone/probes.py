# src/monotone/probes.py
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.measures.empirical import Coupling
from src.models.sampling import SamplerConfig
from src.utils.validators import ensure_int, ensure_nonnegative

PRESETS = ("diagonal", "anti_sorted", "point_mass")


@dataclass(frozen=True)
class ProbeSpec:
    """How many probes, from which seed, at which tolerance; presets come first."""
    count: int = 50
    seed: int = 0
    tolerance: float = 1e-6
    cloud_size: int = 16
    include_presets: bool = True
    sampler: SamplerConfig = field(default_factory=SamplerConfig)

    def __post_init__(self) -> None:
        object.__setattr__(self, "count", ensure_int(self.count, must_be_positive=True))
        object.__setattr__(self, "seed", ensure_int(self.seed, minimum=0))
        object.__setattr__(self, "tolerance", ensure_nonnegative(self.tolerance, "tolerance"))
        object.__setattr__(self, "cloud_size", ensure_int(self.cloud_size, must_be_positive=True))

    def to_dict(self) -> Dict[str, Any]:
        return {"count": self.count, "seed": self.seed, "tolerance": self.tolerance,
                "cloud_size": self.cloud_size, "include_presets": self.include_presets,
                "sampler": self.sampler.to_dict()}


@dataclass(frozen=True)
class Probe:
    """One input of a monotonicity functional: a coupling, a noise pair and a time."""
    index: int
    label: str
    seed: List[int]
    coupling: Coupling
    theta: np.ndarray
    theta_tilde: np.ndarray
    t: float = 0.0

    def rng(self, stream: int = 0) -> np.random.Generator:
        """Generator for extra draws of this probe (field values, directions)."""
        return np.random.default_rng(list(self.seed) + [stream])

    def inputs(self) -> Dict[str, Any]:
        return {
            "x": self.coupling.x.tolist(),
            "y": self.coupling.y.tolist(),
            "theta": [float(v) for v in self.theta],
            "theta_tilde": [float(v) for v in self.theta_tilde],
            "t": float(self.t),
        }


def _preset_coupling(label: str, rng: np.random.Generator, spec: ProbeSpec, dim: int, period: Optional[float]) -> Coupling:
    k = spec.cloud_size
    if label == "diagonal":
        x = spec.sampler.cloud_points(rng, k, dim, period)
        return Coupling(x, x, period)
    if label == "anti_sorted":
        # pairs the smallest first coordinate of one cloud with the largest of the other
        x = spec.sampler.cloud_points(rng, k, dim, period)
        y = spec.sampler.cloud_points(rng, k, dim, period)
        x = x[np.argsort(x[:, 0])]
        y = y[np.argsort(-y[:, 0])]
        return Coupling(x, y, period)
    a = spec.sampler.points(rng, 1, dim, period)
    b = spec.sampler.points(rng, 1, dim, period)
    return Coupling(np.repeat(a, k, axis=0), np.repeat(b, k, axis=0), period)


def draw_probe(
    spec: ProbeSpec,
    index: int,
    dim_x: int,
    dim_theta: int,
    period: Optional[float] = None,
    times: Sequence[float] = (0.0,),
    with_theta_tilde: bool = False,
) -> Probe:
    """
    Probe number `index`, reproducible from (spec.seed, index) alone.

    With presets on, indices 0..2 are the diagonal, anti-sorted and point-mass
    couplings at the last time of `times`; the others pair two Gaussian clouds
    index by index at a time drawn from `times`.
    """
    seed = [spec.seed, int(index)]
    rng = np.random.default_rng(seed)
    times = [float(t) for t in times]
    if spec.include_presets and index < len(PRESETS):
        label = PRESETS[index]
        coupling = _preset_coupling(label, rng, spec, dim_x, period)
        t = times[-1]
    else:
        label = "gaussian"
        x = spec.sampler.cloud_points(rng, spec.cloud_size, dim_x, period)
        y = spec.sampler.cloud_points(rng, spec.cloud_size, dim_x, period)
        coupling = Coupling(x, y, period)
        t = times[int(rng.integers(len(times)))]
    theta = spec.sampler.theta(rng, dim_theta)
    theta_tilde = spec.sampler.theta(rng, dim_theta) if with_theta_tilde else theta.copy()
    if label == "diagonal":
        theta_tilde = theta.copy()
    return Probe(int(index), label, seed, coupling, theta, theta_tilde, t)


def make_probes(
    spec: ProbeSpec,
    dim_x: int,
    dim_theta: int,
    period: Optional[float] = None,
    times: Sequence[float] = (0.0,),
    with_theta_tilde: bool = False,
) -> List[Probe]:
    return [draw_probe(spec, i, dim_x, dim_theta, period, times, with_theta_tilde) for i in range(spec.count)]
