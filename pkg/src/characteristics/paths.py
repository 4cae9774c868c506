# src/characteristics/paths.py
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd

from src.measures.empirical import Coupling, EmpiricalMeasure
from src.utils.io_utils import atomic_write_text
from src.utils.validators import as_points, ensure_int, ensure_positive, ensure_nonnegative

# relative slack accepted on horizon / dt
STEP_SLACK = 1e-9


@dataclass(frozen=True)
class SimConfig:
    """Euler–Maruyama budget: step, cloud size, outer paths, seed, horizon."""
    dt: float
    n_particles: int
    n_paths: int
    seed: int = 0
    horizon: float = 0.0
    n_tagged: int = 16
    workers: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "dt", ensure_positive(self.dt, "dt"))
        object.__setattr__(self, "n_particles", ensure_int(self.n_particles, must_be_positive=True))
        object.__setattr__(self, "n_paths", ensure_int(self.n_paths, must_be_positive=True))
        object.__setattr__(self, "seed", ensure_int(self.seed, minimum=0))
        object.__setattr__(self, "horizon", ensure_nonnegative(self.horizon, "horizon"))
        object.__setattr__(self, "n_tagged", ensure_int(self.n_tagged, minimum=0))
        object.__setattr__(self, "workers", ensure_int(self.workers, must_be_positive=True))
        ratio = self.horizon / self.dt
        if abs(ratio - round(ratio)) > STEP_SLACK * max(1.0, ratio):
            raise ValueError(f"horizon {self.horizon} is not an integer multiple of dt {self.dt}")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def with_horizon(self, horizon: float) -> "SimConfig":
        return dataclasses.replace(self, horizon=horizon)

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class InitialState:
    """Tagged start points (P, d), the noise state θ (n,) and the initial cloud μ."""
    tagged: np.ndarray
    theta: np.ndarray
    cloud: EmpiricalMeasure

    def __post_init__(self) -> None:
        d = self.cloud.dim
        tagged = np.asarray(self.tagged, dtype=float)
        tagged = np.zeros((0, d)) if tagged.size == 0 else as_points(tagged, d, "tagged")
        object.__setattr__(self, "tagged", tagged)
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float).reshape(-1))

    @classmethod
    def from_cloud(cls, cloud: EmpiricalMeasure, theta=(), tagged=None) -> "InitialState":
        return cls(np.zeros((0, cloud.dim)) if tagged is None else tagged, np.asarray(theta, dtype=float), cloud)


@dataclass
class PathRecord:
    """One outer path: trajectories on the step grid plus the increments that drove them."""
    theta: np.ndarray              # (K+1, n)
    cloud: np.ndarray              # (K+1, N, d)
    tagged: np.ndarray             # (K+1, P, d)
    increments: Dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class PathBundle:
    """
    Realized characteristics for every outer path.

    Arrays are indexed [path, step, ...]; step 0 holds the initial condition
    exactly. Increments are the standard normals per role, kept so coupled
    runs can reuse them.
    """
    dt: float
    start_step: int
    theta: np.ndarray              # (M, K+1, n)
    clouds: np.ndarray             # (M, K+1, N, d)
    tagged: np.ndarray             # (M, K+1, P, d)
    increments: Dict[str, np.ndarray]
    period: Optional[float] = None

    @classmethod
    def from_records(cls, records: List[PathRecord], dt: float, start_step: int, period: Optional[float]) -> "PathBundle":
        roles = records[0].increments.keys() if records else ()
        return cls(
            dt=dt,
            start_step=start_step,
            theta=np.stack([r.theta for r in records]),
            clouds=np.stack([r.cloud for r in records]),
            tagged=np.stack([r.tagged for r in records]),
            increments={role: np.stack([r.increments[role] for r in records]) for role in roles},
            period=period,
        )

    @property
    def n_paths(self) -> int:
        return int(self.clouds.shape[0])

    @property
    def n_steps(self) -> int:
        return int(self.clouds.shape[1]) - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def cloud(self, path: int, step: int) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.clouds[path, step], self.period)

    def identical_to(self, other: "PathBundle") -> bool:
        """Bitwise equality of every trajectory and increment."""
        if set(self.increments) != set(other.increments):
            return False
        return (
            np.array_equal(self.theta, other.theta)
            and np.array_equal(self.clouds, other.clouds)
            and np.array_equal(self.tagged, other.tagged)
            and all(np.array_equal(self.increments[k], other.increments[k]) for k in self.increments)
        )

    # ---------------------------
    # Export
    # ---------------------------
    def to_frame(self) -> pd.DataFrame:
        """Long format: path, step, time, entity, index, component, value."""
        frames = []
        for entity, arr in (("theta", self.theta[:, :, None, :]), ("cloud", self.clouds), ("tagged", self.tagged)):
            if arr.size == 0:
                continue
            M, K1, P, C = arr.shape
            path, step, index, comp = np.meshgrid(np.arange(M), np.arange(K1), np.arange(P), np.arange(C), indexing="ij")
            frames.append(pd.DataFrame({
                "path": path.ravel(),
                "step": step.ravel(),
                "time": (step.ravel() * self.dt),
                "entity": entity,
                "index": index.ravel(),
                "component": comp.ravel(),
                "value": arr.ravel(),
            }))
        if not frames:
            return pd.DataFrame(columns=["path", "step", "time", "entity", "index", "component", "value"])
        return pd.concat(frames, ignore_index=True)

    def to_csv(self, path: Union[str, Path]) -> None:
        atomic_write_text(path, self.to_frame().to_csv(index=False, float_format="%.12e", lineterminator="\n"))


@dataclass
class DoubledBundle:
    """Two systems driven by the same increments, particle i of one paired with particle i of the other."""
    first: PathBundle
    second: PathBundle

    def coupling(self, path: int, step: int) -> Coupling:
        return Coupling(self.first.clouds[path, step], self.second.clouds[path, step], self.first.period)

    @property
    def final_couplings(self) -> List[Coupling]:
        return [self.coupling(m, self.first.n_steps) for m in range(self.first.n_paths)]
