# src/lipsolve/consistency.py
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np

from src.characteristics.engine import draw_noise, idio_rows, integrate_path, map_paths
from src.characteristics.noise_bank import NoiseBank
from src.characteristics.paths import InitialState, SimConfig
from src.characteristics.simulate import model_dynamics
from src.measures.empirical import EmpiricalMeasure
from src.models.model_spec import ModelSpec
from src.models.sampling import SamplerConfig
from src.utils.validators import as_points, as_vector

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResidualEstimate:
    residual: float
    std_error: float

    def within(self, factor: float = 3.0) -> bool:
        return self.residual <= factor * self.std_error

    def to_dict(self) -> Dict[str, float]:
        return {"residual": self.residual, "std_error": self.std_error}


class ShiftedField:
    """W(· + offset): lets a run of length t − s read the field at remaining times t − u."""

    def __init__(self, fld: Any, offset: float) -> None:
        self.fld = fld
        self.offset = float(offset)

    def evaluate(self, t, x, theta, mu):
        return self.fld.evaluate(t + self.offset, x, theta, mu)


def _n_steps(span: float, dt: float) -> int:
    n = int(round(span / dt))
    if abs(n * dt - span) > 1e-9 * max(1.0, span):
        raise ValueError(f"time span {span} is not a multiple of dt={dt}")
    return n


def _mean_and_se(per_path: np.ndarray) -> tuple:
    M = per_path.shape[0]
    mean = per_path.mean(axis=0)
    se = per_path.std(axis=0, ddof=1) / np.sqrt(M) if M > 1 else np.zeros_like(mean)
    return mean, se


def check_dpp(
    model: ModelSpec,
    fld: Any,
    t: float,
    s: float,
    xs: Any,
    theta: Any,
    mu: EmpiricalMeasure,
    cfg: SimConfig,
) -> ResidualEstimate:
    """
    max over start points of |W(t, x) − E[W(s, X_{t−s}) + Σ_u G(X_u, θ_u, m_u, W(t−u)) dt]|.

    One tagged particle per start point and path, driven with the field's drift.
    """
    if not 0.0 <= s <= t:
        raise ValueError(f"need 0 <= s <= t, got s={s}, t={t}")
    xs = as_points(xs, model.dim_x, "x")
    theta = as_vector(theta, model.dim_theta, "theta")
    target = np.asarray(fld.evaluate(t, xs, theta, mu), dtype=float)
    n_steps = _n_steps(t - s, cfg.dt)
    if n_steps == 0:
        return ResidualEstimate(0.0, 0.0)

    shifted = ShiftedField(fld, s)
    dyn = model_dynamics(model, shifted)
    bank = NoiseBank(cfg.seed)
    dt = cfg.dt
    K = xs.shape[0]

    def task(m: int) -> np.ndarray:
        noise = draw_noise(bank, dyn, m, 0, n_steps, idio_rows(mu.n, K))
        acc = np.zeros_like(xs)
        out: List[np.ndarray] = []

        def observe(k, tau, cloud, tagged, theta_now, mu_now):
            w = shifted.evaluate(tau, tagged, theta_now, mu_now)
            if k == n_steps:
                out.append(w + acc)
                return
            acc[:] += dt * np.asarray(model.G(tagged, theta_now, mu_now, w), dtype=float).reshape(acc.shape)

        integrate_path(dyn, InitialState(xs, theta, mu), n_steps, dt, noise, path=m, observer=observe, record=False)
        return out[0]

    per_path = np.stack(map_paths(task, cfg.n_paths, cfg.workers))
    mean, se = _mean_and_se(per_path)
    gaps = np.abs(target - mean)
    i = np.unravel_index(int(np.argmax(gaps)), gaps.shape)
    return ResidualEstimate(float(gaps[i]), float(se[i]))


def martingale_residual(
    model: ModelSpec,
    fld: Any,
    T: float,
    cfg: SimConfig,
    init: Optional[InitialState] = None,
    sampler: Optional[SamplerConfig] = None,
) -> ResidualEstimate:
    """
    max over grid times of |mean M_t − mean M_0|, M_t = W(T − t, X_t, θ_t, m_t) + Σ_{s<t} G dt,
    averaged over the cloud particles and the outer paths.

    Without `init`, each path starts from a cloud and θ drawn from `sampler`.
    """
    n_steps = _n_steps(T, cfg.dt)
    dyn = model_dynamics(model, fld)
    bank = NoiseBank(cfg.seed)
    sampler = sampler or SamplerConfig()
    dt = cfg.dt

    def start(m: int) -> InitialState:
        if init is not None:
            return init
        rng = bank.scene_rng(m)
        theta = sampler.theta(rng, model.dim_theta)
        cloud = sampler.cloud_points(rng, cfg.n_particles, model.dim_x, model.period)
        return InitialState.from_cloud(EmpiricalMeasure(cloud, model.period), theta)

    def task(m: int) -> np.ndarray:
        state = start(m)
        noise = draw_noise(bank, dyn, m, 0, n_steps, state.cloud.n)
        acc = np.zeros((state.cloud.n, model.dim_x))
        series = np.zeros((n_steps + 1, model.dim_x))

        def observe(k, tau, cloud, tagged, theta_now, mu_now):
            w = fld.evaluate(tau, cloud, theta_now, mu_now)
            series[k] = (w + acc).mean(axis=0)
            if k < n_steps:
                acc[:] += dt * np.asarray(model.G(cloud, theta_now, mu_now, w), dtype=float).reshape(acc.shape)

        integrate_path(dyn, state, n_steps, dt, noise, path=m, observer=observe, record=False)
        return series

    per_path = np.stack(map_paths(task, cfg.n_paths, cfg.workers))
    drift = per_path - per_path[:, :1, :]
    mean, se = _mean_and_se(drift)
    gaps = np.abs(mean)
    i = np.unravel_index(int(np.argmax(gaps)), gaps.shape)
    logger.debug("Martingale residual on %s: %.3e (SE %.3e)", model.name, gaps[i], se[i])
    return ResidualEstimate(float(gaps[i]), float(se[i]))
