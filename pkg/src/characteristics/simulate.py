# src/characteristics/simulate.py
from __future__ import annotations

import logging
from typing import Any, Callable, Optional

import numpy as np

from src.characteristics.engine import Dynamics, Velocity, run_paths
from src.characteristics.noise_bank import NoiseBank
from src.characteristics.paths import DoubledBundle, InitialState, PathBundle, SimConfig
from src.measures.empirical import Coupling, EmpiricalMeasure, DimensionMismatchError
from src.measures.transport import wasserstein_distance
from src.models.model_spec import ModelSpec
from src.utils.validators import as_vector

logger = logging.getLogger(__name__)


def model_velocity(model: ModelSpec, field: Any) -> Velocity:
    """(F(x, θ, μ, W), b(θ, μ, W|μ)) with W = field(τ, ·, θ, μ)."""

    def velocity(tau: float, points: np.ndarray, theta: np.ndarray, mu: EmpiricalMeasure):
        w = field.evaluate(tau, points, theta, mu)
        return model.F(points, theta, mu, w), model.b(theta, mu, w[:mu.n])

    return velocity


def model_dynamics(model: ModelSpec, field: Any, beta: float = 0.0, correlation: Optional[np.ndarray] = None) -> Dynamics:
    return Dynamics(
        velocity=model_velocity(model, field),
        dim_x=model.dim_x,
        dim_theta=model.dim_theta,
        sigma_x=model.sigma_x,
        sigma_theta=model.sigma_theta,
        beta=beta,
        correlation=correlation,
        period=model.period,
    )


def _check_init(model: ModelSpec, init: InitialState, cfg: SimConfig) -> None:
    if init.cloud.dim != model.dim_x or init.cloud.period != model.period:
        raise DimensionMismatchError(f"initial cloud does not live on the state space of model {model.name}")
    if init.cloud.n != cfg.n_particles:
        raise ValueError(f"initial cloud has {init.cloud.n} particles, config expects {cfg.n_particles}")
    as_vector(init.theta, model.dim_theta, "theta")


def _simulate(model: ModelSpec, field: Any, init: InitialState, cfg: SimConfig, dyn: Dynamics, start_step: int) -> PathBundle:
    _check_init(model, init, cfg)
    bank = NoiseBank(cfg.seed)
    records = run_paths(dyn, [init] * cfg.n_paths, cfg.n_steps, cfg.dt, bank, start_step=start_step, workers=cfg.workers)
    return PathBundle.from_records(records, cfg.dt, start_step, model.period)


def simulate_forward(model: ModelSpec, field: Any, init: InitialState, cfg: SimConfig, start_step: int = 0) -> PathBundle:
    """
    Characteristics (X_s, θ_s, m_s) on [0, cfg.horizon] for every outer path.

    The field is read at remaining time t − s. `start_step` offsets the noise
    addresses, so restarting from a stored state at step j with horizon t − j·dt
    reproduces the tail of the original run bitwise.

    Raises:
        FieldSupportError: the field is not defined on [0, horizon].
        ParticleBlowUpError: a particle leaves the guard box.
    """
    return _simulate(model, field, init, cfg, model_dynamics(model, field), start_step)


def simulate_common_noise(
    model: ModelSpec,
    field: Any,
    init: InitialState,
    cfg: SimConfig,
    beta: Optional[float] = None,
    correlation: Optional[np.ndarray] = None,
    start_step: int = 0,
) -> PathBundle:
    """
    simulate_forward plus the shared shift √(2β) dB^c on every cloud and tagged particle.

    `correlation` is an optional (n, d) matrix correlating θ increments with
    the common increments; the joint covariance must be positive semidefinite.
    """
    beta = model.beta_cn if beta is None else float(beta)
    return _simulate(model, field, init, cfg, model_dynamics(model, field, beta, correlation), start_step)


def simulate_doubled(
    model: ModelSpec,
    field: Any,
    theta: np.ndarray,
    theta_tilde: np.ndarray,
    coupling: Coupling,
    cfg: SimConfig,
) -> DoubledBundle:
    """
    Two systems started from the marginals of `coupling` (particle i paired
    with particle i) and (θ, θ̃), driven by identical increments.
    """
    if coupling.size != cfg.n_particles:
        raise ValueError(f"coupling has {coupling.size} pairs, config expects {cfg.n_particles}")
    first = InitialState.from_cloud(EmpiricalMeasure(coupling.x, model.period), theta)
    second = InitialState.from_cloud(EmpiricalMeasure(coupling.y, model.period), theta_tilde)
    return DoubledBundle(
        simulate_forward(model, field, first, cfg),
        simulate_forward(model, field, second, cfg),
    )


# ---------------------------
# Diagnostics over stored paths
# ---------------------------
def doubled_gradient_gap(doubled: DoubledBundle, field: Any) -> np.ndarray:
    """
    Per path, Σ_s dt · mean over μ_s ∪ ν_s of |W(t−s, x, θ_s, μ_s) − W(t−s, x, θ̃_s, ν_s)|².

    Left-endpoint sum over the stored grid.
    """
    a, b = doubled.first, doubled.second
    K, dt = a.n_steps, a.dt
    gaps = np.zeros(a.n_paths)
    for m in range(a.n_paths):
        total = 0.0
        for k in range(K):
            tau = (K - k) * dt
            mu, nu = a.cloud(m, k), b.cloud(m, k)
            pts = np.vstack([mu.points, nu.points])
            diff = field.evaluate(tau, pts, a.theta[m, k], mu) - field.evaluate(tau, pts, b.theta[m, k], nu)
            total += dt * float(np.mean(np.sum(diff ** 2, axis=1)))
        gaps[m] = total
    return gaps


DriftField = Callable[[float, np.ndarray], np.ndarray]


def wasserstein_stability_ratio(
    drift_a: DriftField,
    drift_b: DriftField,
    cloud: EmpiricalMeasure,
    cfg: SimConfig,
    sigma_x: float = 0.0,
    q: float = 2.0,
) -> np.ndarray:
    """
    Ratios W_q(μ¹_s, μ²_s) / (Σ_{u<s} dt·sup|c₁ − c₂|^q)^{1/q} per path and step.

    Both clouds start from `cloud` and share increments; the sup is taken over
    the particles of both clouds at each step. Steps with a zero denominator
    are reported as 0.
    """
    def dyn_for(drift: DriftField) -> Dynamics:
        return Dynamics(velocity=lambda tau, pts, th, mu: (drift(tau, pts), np.zeros(0)),
                        dim_x=cloud.dim, dim_theta=0, sigma_x=sigma_x, period=cloud.period)

    bank = NoiseBank(cfg.seed)
    inits = [InitialState.from_cloud(cloud)] * cfg.n_paths
    first = run_paths(dyn_for(drift_a), inits, cfg.n_steps, cfg.dt, bank, workers=cfg.workers)
    second = run_paths(dyn_for(drift_b), inits, cfg.n_steps, cfg.dt, bank, workers=cfg.workers)

    K = cfg.n_steps
    ratios = np.zeros((cfg.n_paths, K))
    for m in range(cfg.n_paths):
        acc = 0.0
        for k in range(K):
            tau = (K - k) * cfg.dt
            pts = np.vstack([first[m].cloud[k], second[m].cloud[k]])
            sup = float(np.max(np.sqrt(np.sum((drift_a(tau, pts) - drift_b(tau, pts)) ** 2, axis=1))))
            acc += cfg.dt * sup ** q
            dist = wasserstein_distance(q, EmpiricalMeasure(first[m].cloud[k + 1], cloud.period),
                                        EmpiricalMeasure(second[m].cloud[k + 1], cloud.period))
            ratios[m, k] = dist / acc ** (1.0 / q) if acc > 0 else 0.0
    return ratios
