# src/lipsolve/psi.py
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional, Tuple

import numpy as np

from src.characteristics.engine import Dynamics, ParticleBlowUpError, draw_noise, integrate_path, map_paths
from src.characteristics.noise_bank import NoiseBank
from src.characteristics.paths import InitialState, SimConfig
from src.lipsolve.field import FieldApprox, FieldBasis, fit_coefficients
from src.measures.empirical import EmpiricalMeasure
from src.models.model_spec import ModelSpec
from src.models.sampling import SamplerConfig
from src.utils.validators import ensure_int, ensure_nonnegative

logger = logging.getLogger(__name__)

# A(τ, x, θ, μ) -> (K, d): dX = −A ds
XDrift = Callable[[float, np.ndarray, np.ndarray, EmpiricalMeasure], np.ndarray]
# B(τ, θ, μ) -> (n,): dθ = −B ds
ThetaDrift = Callable[[float, np.ndarray, EmpiricalMeasure], np.ndarray]
Source = Callable[[float, np.ndarray, np.ndarray, EmpiricalMeasure], np.ndarray]
Terminal = Callable[[np.ndarray, np.ndarray, EmpiricalMeasure], np.ndarray]


@dataclass(frozen=True)
class NoiseSpec:
    """Diffusion data of the characteristics: dimensions, σ_x, σ_θ, common β, torus period."""
    dim_x: int
    dim_theta: int
    sigma_x: float = 0.0
    sigma_theta: Any = 0.0
    beta: float = 0.0
    period: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "dim_x", ensure_int(self.dim_x, must_be_positive=True))
        object.__setattr__(self, "dim_theta", ensure_int(self.dim_theta, minimum=0))
        object.__setattr__(self, "sigma_x", ensure_nonnegative(self.sigma_x, "sigma_x"))
        object.__setattr__(self, "beta", ensure_nonnegative(self.beta, "beta"))
        sig = np.broadcast_to(np.asarray(self.sigma_theta, dtype=float), (self.dim_theta,)).copy()
        object.__setattr__(self, "sigma_theta", sig)

    @classmethod
    def from_model(cls, model: ModelSpec) -> "NoiseSpec":
        return cls(model.dim_x, model.dim_theta, model.sigma_x, model.sigma_theta, model.beta_cn, model.period)

    def dynamics(self, velocity) -> Dynamics:
        return Dynamics(velocity, self.dim_x, self.dim_theta, self.sigma_x, self.sigma_theta, self.beta, None, self.period)


@dataclass(frozen=True)
class LipsolveConfig:
    """
    Budget of one ψ evaluation.

    `sim.horizon` is the horizon T; `fit_points` grid times (plus t = 0) carry a
    regression each; `audit_size` scenes measure Picard changes.
    """
    sim: SimConfig
    fit_points: int = 10
    degree: int = 2
    audit_size: int = 64
    sampler: SamplerConfig = field(default_factory=SamplerConfig)

    def __post_init__(self) -> None:
        object.__setattr__(self, "fit_points", ensure_int(self.fit_points, must_be_positive=True))
        object.__setattr__(self, "degree", ensure_int(self.degree, minimum=0))
        object.__setattr__(self, "audit_size", ensure_int(self.audit_size, must_be_positive=True))

    def with_horizon(self, horizon: float) -> "LipsolveConfig":
        return LipsolveConfig(self.sim.with_horizon(horizon), self.fit_points, self.degree, self.audit_size, self.sampler)

    def grid_steps(self) -> List[int]:
        """Step counts j_0 = 0 < j_1 < ... < j_K = n_steps of the fit grid."""
        n = self.sim.n_steps
        if n == 0:
            return [0]
        k = min(self.fit_points, n)
        return sorted({int(round(i * n / k)) for i in range(k + 1)})

    def grid_times(self) -> np.ndarray:
        return np.array(self.grid_steps(), dtype=float) * self.sim.dt

    def basis_for(self, noise: NoiseSpec) -> FieldBasis:
        return FieldBasis(noise.dim_x, noise.dim_theta, self.degree, noise.period)


def training_scene(cfg: LipsolveConfig, noise: NoiseSpec, bank: NoiseBank, path: int) -> Tuple[np.ndarray, EmpiricalMeasure]:
    """(θ, μ) drawn once per outer path; μ carries n_particles particles."""
    rng = bank.scene_rng(path)
    theta = cfg.sampler.theta(rng, noise.dim_theta)
    cloud = cfg.sampler.cloud_points(rng, cfg.sim.n_particles, noise.dim_x, noise.period)
    return theta, EmpiricalMeasure(cloud, noise.period)


def _path_targets(
    dyn: Dynamics,
    A: XDrift,
    E: Source,
    V0: Terminal,
    cfg: LipsolveConfig,
    noise_spec: NoiseSpec,
    bank: NoiseBank,
    path: int,
    basis: FieldBasis,
) -> Tuple[np.ndarray, List[np.ndarray]]:
    theta0, mu0 = training_scene(cfg, noise_spec, bank, path)
    x0 = np.array(mu0.points)
    feats = basis.features(x0, theta0, mu0)
    steps = cfg.grid_steps()
    dt = cfg.sim.dt
    noise = draw_noise(bank, dyn, path, 0, steps[-1], mu0.n)
    init = InitialState.from_cloud(mu0, theta0)

    targets: List[np.ndarray] = []
    for j in steps:
        if j == 0:
            targets.append(np.asarray(V0(x0, theta0, mu0), dtype=float).reshape(x0.shape))
            continue
        acc = np.zeros_like(x0)
        final: List[np.ndarray] = []

        def observe(k, tau, cloud, tagged, theta, mu, _acc=acc, _final=final, _j=j):
            if k < _j:
                _acc += dt * np.asarray(E(tau, cloud, theta, mu), dtype=float).reshape(cloud.shape)
            else:
                _final.append(np.asarray(V0(cloud, theta, mu), dtype=float).reshape(cloud.shape))

        try:
            integrate_path(dyn, init, j, dt, {role: arr[:j] for role, arr in noise.items()},
                           path=path, observer=observe, record=False)
        except ParticleBlowUpError as exc:
            exc.time = j * dt
            raise
        targets.append(final[0] + acc)
    return feats, targets


def apply_psi(
    A: XDrift,
    B: ThetaDrift,
    E: Source,
    V0: Terminal,
    cfg: LipsolveConfig,
    noise: NoiseSpec,
    basis: Optional[FieldBasis] = None,
) -> FieldApprox:
    """
    Feynman–Kac solve of the linear transport system, fitted on the grid.

    ψ(t_k, x, θ, μ) = E[V0(X_{t_k}, θ_{t_k}, m_{t_k}) + Σ_s E(t_k − s, X_s, θ_s, m_s) dt]
    along dX = −A ds + √(2σ_x) dB, dθ = −B ds + √(2σ_θ) dB^θ, the source summed
    at left endpoints. Each outer path draws one training scene (θ, μ); its
    particles are the regression samples. Increments are fixed by the seed,
    so repeated calls share them.

    Raises:
        ParticleBlowUpError: a characteristic leaves the guard box (with `time` set).
    """
    basis = basis or cfg.basis_for(noise)

    def velocity(tau, points, theta, mu):
        return A(tau, points, theta, mu), B(tau, theta, mu)

    dyn = noise.dynamics(velocity)
    bank = NoiseBank(cfg.sim.seed)
    results = map_paths(
        lambda m: _path_targets(dyn, A, E, V0, cfg, noise, bank, m, basis),
        cfg.sim.n_paths,
        cfg.sim.workers,
    )
    feats = np.vstack([r[0] for r in results])
    fits = []
    for g in range(len(cfg.grid_steps())):
        targets = np.vstack([r[1][g] for r in results])
        fits.append(fit_coefficients(feats, targets))
    logger.debug("psi fitted on %d rows at %d grid times", feats.shape[0], len(fits))
    return FieldApprox.from_fits(basis, cfg.grid_times(), fits)
