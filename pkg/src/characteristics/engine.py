# src/characteristics/engine.py
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.characteristics.noise_bank import NoiseBank
from src.characteristics.paths import InitialState, PathRecord
from src.measures.empirical import EmpiricalMeasure, reduce_to_torus
from src.utils.validators import ensure_nonnegative

logger = logging.getLogger(__name__)

PARTICLE_GUARD = 1e6
PSD_SLACK = 1e-12

# velocity(tau, points, theta, mu) -> (x velocity (K, d), theta velocity (n,))
# the first mu.n rows of `points` are the cloud particles
Velocity = Callable[[float, np.ndarray, np.ndarray, EmpiricalMeasure], Tuple[np.ndarray, np.ndarray]]
# observer(step, tau, cloud, tagged, theta, mu)
Observer = Callable[[int, float, np.ndarray, np.ndarray, np.ndarray, EmpiricalMeasure], None]


class ParticleBlowUpError(RuntimeError):
    """A particle coordinate left the guard box (or became non-finite)."""

    def __init__(self, path: int, step: int, magnitude: float, time: Optional[float] = None) -> None:
        super().__init__(f"Particle blow-up on path {path} at step {step} (|x| = {magnitude:.3e})")
        self.path = path
        self.step = step
        self.magnitude = magnitude
        # remaining-time of the run that failed, filled in by callers that know it
        self.time = time


def correlation_root(correlation: np.ndarray, n: int, d: int) -> np.ndarray:
    """
    Symmetric square root of Γ = [[I_n, ρ], [ρᵀ, I_d]].

    Raises:
        ValueError: wrong shape or Γ not positive semidefinite.
    """
    rho = np.asarray(correlation, dtype=float)
    if rho.shape != (n, d):
        raise ValueError(f"correlation must have shape ({n}, {d}), got {rho.shape}")
    gamma = np.block([[np.eye(n), rho], [rho.T, np.eye(d)]])
    vals, vecs = np.linalg.eigh(gamma)
    if vals.min() < -PSD_SLACK:
        raise ValueError(f"joint noise covariance is not positive semidefinite (min eigenvalue {vals.min():.3e})")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


@dataclass(frozen=True)
class Dynamics:
    """
    dX = −v_x ds + √(2σ_x) dB + √(2β) dB^c,   dθ = −v_θ ds + √(2σ_θ) dB^θ,
    with (v_x, v_θ) = velocity(t − s, ·). Torus positions are wrapped after each step.
    """
    velocity: Velocity
    dim_x: int
    dim_theta: int
    sigma_x: float = 0.0
    sigma_theta: Optional[np.ndarray] = None
    beta: float = 0.0
    correlation: Optional[np.ndarray] = None
    period: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "sigma_x", ensure_nonnegative(self.sigma_x, "sigma_x"))
        object.__setattr__(self, "beta", ensure_nonnegative(self.beta, "beta"))
        sig = np.zeros(self.dim_theta) if self.sigma_theta is None else np.broadcast_to(
            np.asarray(self.sigma_theta, dtype=float), (self.dim_theta,)).copy()
        object.__setattr__(self, "sigma_theta", sig)
        if self.correlation is not None:
            object.__setattr__(self, "correlation", correlation_root(self.correlation, self.dim_theta, self.dim_x))

    @property
    def has_common(self) -> bool:
        return self.beta > 0 or self.correlation is not None


def draw_noise(bank: NoiseBank, dyn: Dynamics, path: int, start_step: int, n_steps: int, rows: int) -> Dict[str, np.ndarray]:
    """All increments one path needs, keyed by role, each (n_steps, rows, dim)."""
    noise = {
        "idio": bank.stream(path, "idio", start_step, n_steps, rows, dyn.dim_x),
        "theta": bank.stream(path, "theta", start_step, n_steps, 1, dyn.dim_theta),
    }
    if dyn.has_common:
        noise["common"] = bank.stream(path, "common", start_step, n_steps, 1, dyn.dim_x)
    return noise


def _guard(path: int, step: int, *arrays: np.ndarray) -> None:
    for arr in arrays:
        if arr.size == 0:
            continue
        magnitude = float(np.max(np.abs(arr)))
        if not np.isfinite(magnitude) or magnitude > PARTICLE_GUARD:
            raise ParticleBlowUpError(path, step, magnitude)


def integrate_path(
    dyn: Dynamics,
    init: InitialState,
    n_steps: int,
    dt: float,
    noise: Dict[str, np.ndarray],
    path: int = 0,
    observer: Optional[Observer] = None,
    tagged_drift: bool = True,
    antithetic_tagged: bool = False,
    record: bool = True,
) -> PathRecord:
    """
    Euler–Maruyama for one outer path.

    The cloud uses idiosyncratic rows 0..N−1 and the tagged particles the rows
    after it. With `antithetic_tagged` the second half of the tagged particles
    reuses the first half's increments with the opposite sign. With
    `tagged_drift=False` tagged particles only diffuse.

    Raises:
        ParticleBlowUpError: a coordinate exceeds the guard.
    """
    period = dyn.period
    cloud = np.array(init.cloud.points, dtype=float)
    tagged = np.array(init.tagged, dtype=float)
    theta = np.array(init.theta, dtype=float)
    N, P = cloud.shape[0], tagged.shape[0]
    if antithetic_tagged and P % 2:
        raise ValueError(f"antithetic tagged particles need an even count, got {P}")
    if theta.shape != (dyn.dim_theta,):
        raise ValueError(f"theta must have length {dyn.dim_theta}, got {theta.shape}")

    sqrt_dt = np.sqrt(dt)
    sx = np.sqrt(2.0 * dyn.sigma_x) * sqrt_dt
    sth = np.sqrt(2.0 * dyn.sigma_theta) * sqrt_dt
    sc = np.sqrt(2.0 * dyn.beta) * sqrt_dt

    keep = n_steps + 1 if record else 1
    hist_theta = np.empty((keep, dyn.dim_theta))
    hist_cloud = np.empty((keep, N, dyn.dim_x))
    hist_tagged = np.empty((keep, P, dyn.dim_x))
    hist_theta[0], hist_cloud[0], hist_tagged[0] = theta, cloud, tagged

    for k in range(n_steps):
        tau = (n_steps - k) * dt
        mu = EmpiricalMeasure(cloud, period)
        if observer is not None:
            observer(k, tau, cloud, tagged, theta, mu)

        points = np.vstack([cloud, tagged]) if (tagged_drift and P) else cloud
        vx, vth = dyn.velocity(tau, points, theta, mu)
        vx = np.asarray(vx, dtype=float).reshape(points.shape)
        vth = np.asarray(vth, dtype=float).reshape(dyn.dim_theta)

        z = noise["idio"][k]
        z_cloud = z[:N]
        z_tagged = np.vstack([z[N:], -z[N:]]) if antithetic_tagged else z[N:N + P]
        z_theta = noise["theta"][k][0]
        z_common = noise["common"][k][0] if "common" in noise else np.zeros(dyn.dim_x)
        if dyn.correlation is not None:
            mixed = dyn.correlation @ np.concatenate([z_theta, z_common])
            z_theta, z_common = mixed[:dyn.dim_theta], mixed[dyn.dim_theta:]
        shift = sc * z_common

        new_cloud = cloud - vx[:N] * dt + sx * z_cloud + shift
        new_tagged = tagged + sx * z_tagged + shift
        if tagged_drift and P:
            new_tagged = new_tagged - vx[N:] * dt
        new_theta = theta - vth * dt + sth * z_theta
        _guard(path, k + 1, new_cloud, new_tagged, new_theta)

        if period is not None:
            new_cloud = reduce_to_torus(new_cloud, period)
            new_tagged = reduce_to_torus(new_tagged, period)
        cloud, tagged, theta = new_cloud, new_tagged, new_theta
        if record:
            hist_theta[k + 1], hist_cloud[k + 1], hist_tagged[k + 1] = theta, cloud, tagged

    if observer is not None:
        observer(n_steps, 0.0, cloud, tagged, theta, EmpiricalMeasure(cloud, period))
    if not record:
        hist_theta[0], hist_cloud[0], hist_tagged[0] = theta, cloud, tagged
    return PathRecord(hist_theta, hist_cloud, hist_tagged, dict(noise) if record else {})


def map_paths(task: Callable[[int], object], n_paths: int, workers: int = 1) -> List[object]:
    """Run `task(path)` for every path; results come back in path order."""
    if workers <= 1 or n_paths <= 1:
        return [task(m) for m in range(n_paths)]
    with ThreadPoolExecutor(max_workers=min(workers, n_paths)) as pool:
        return list(pool.map(task, range(n_paths)))


def idio_rows(n_cloud: int, n_tagged: int, antithetic_tagged: bool = False) -> int:
    return n_cloud + (n_tagged // 2 if antithetic_tagged else n_tagged)


def run_paths(
    dyn: Dynamics,
    inits: Sequence[InitialState],
    n_steps: int,
    dt: float,
    bank: NoiseBank,
    start_step: int = 0,
    workers: int = 1,
    tagged_drift: bool = True,
    antithetic_tagged: bool = False,
) -> List[PathRecord]:
    """Integrate one path per initial state, each on its own noise address."""

    def task(m: int) -> PathRecord:
        init = inits[m]
        rows = idio_rows(init.cloud.n, init.tagged.shape[0], antithetic_tagged)
        noise = draw_noise(bank, dyn, m, start_step, n_steps, rows)
        return integrate_path(dyn, init, n_steps, dt, noise, path=m,
                              tagged_drift=tagged_drift, antithetic_tagged=antithetic_tagged)

    records = map_paths(task, len(inits), workers)
    logger.debug("Integrated %d paths of %d steps", len(records), n_steps)
    return records  # type: ignore[return-value]
