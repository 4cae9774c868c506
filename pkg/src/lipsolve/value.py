# src/lipsolve/value.py
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.characteristics.engine import draw_noise, idio_rows, integrate_path, map_paths
from src.characteristics.noise_bank import NoiseBank
from src.characteristics.paths import InitialState, SimConfig
from src.characteristics.simulate import model_dynamics
from src.measures.empirical import EmpiricalMeasure
from src.models.model_spec import ModelSpec
from src.utils.validators import as_points, as_vector

logger = logging.getLogger(__name__)

FD_STEP = 1e-3


class MissingCoefficientError(ValueError):
    """The operation needs model data (U0, H, alpha_H, ...) the model does not carry."""


def require_value_data(model: ModelSpec) -> None:
    if not model.has_value_data:
        raise MissingCoefficientError(f"Model {model.name} needs U0 and H for value reconstruction")


def _steps(t: float, dt: float) -> int:
    n = int(round(t / dt))
    if abs(n * dt - t) > 1e-9 * max(1.0, t):
        raise ValueError(f"t={t} is not a multiple of dt={dt}")
    return n


@dataclass
class _TaggedSamples:
    values: np.ndarray                 # (P,)
    gradients: Optional[np.ndarray]    # (P, d)


def _tagged_path(model, fld, t, xs, theta, mu, cfg, pairs, path, bank, with_gradient) -> _TaggedSamples:
    n_steps = _steps(t, cfg.dt)
    dt = cfg.dt
    base = np.repeat(xs, pairs, axis=0)
    tagged = np.vstack([base, base])
    init = InitialState(tagged, theta, mu)
    dyn = model_dynamics(model, fld)
    N = mu.n
    noise = draw_noise(bank, dyn, path, 0, n_steps, idio_rows(N, tagged.shape[0], antithetic_tagged=True))

    P = tagged.shape[0]
    running = np.zeros(P)
    kernel = np.zeros((P, model.dim_x)) if with_gradient else None
    brownian = np.zeros((P // 2, model.dim_x))
    scale = np.sqrt(2.0 * model.sigma_x)
    terminal: List[np.ndarray] = []

    def observe(k, tau, cloud, tagged_now, theta_now, mu_now):
        if k == n_steps:
            terminal.append(np.asarray(model.U0(tagged_now, theta_now, mu_now), dtype=float).reshape(P))
            if with_gradient:
                terminal.append(np.asarray(model.W0(tagged_now, theta_now, mu_now), dtype=float).reshape(P, model.dim_x))
            return
        w = fld.evaluate(tau, tagged_now, theta_now, mu_now)
        h = np.asarray(model.H(tagged_now, theta_now, mu_now, w), dtype=float).reshape(P)
        running[:] += dt * h
        if with_gradient and k > 0:
            b_s = np.vstack([brownian, -brownian])
            kernel[:] += dt * h[:, None] * b_s / (scale * max(k * dt, dt))
        brownian[:] += np.sqrt(dt) * noise["idio"][k][N:]

    integrate_path(dyn, init, n_steps, dt, noise, path=path, observer=observe,
                   tagged_drift=False, antithetic_tagged=True, record=False)
    values = terminal[0] - running
    grads = (terminal[1] - kernel) if with_gradient else None
    return _TaggedSamples(values, grads)


def _per_path(samples: List[np.ndarray], K: int, pairs: int) -> np.ndarray:
    """(M, K, pairs, ...) antithetic pair means, rows grouped by start point."""
    out = []
    for arr in samples:
        half = arr.shape[0] // 2
        pair_means = 0.5 * (arr[:half] + arr[half:])
        out.append(pair_means.reshape((K, pairs) + arr.shape[1:]))
    return np.stack(out)


def _reduce(samples: List[np.ndarray], K: int, pairs: int) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and standard error; paths are the independent units, or the pairs when there is one path."""
    stacked = _per_path(samples, K, pairs)
    M = stacked.shape[0]
    if M > 1:
        by_path = stacked.mean(axis=2)
        return by_path.mean(axis=0), by_path.std(axis=0, ddof=1) / np.sqrt(M)
    units = stacked[0]
    se = units.std(axis=1, ddof=1) / np.sqrt(pairs) if pairs > 1 else np.zeros(units.shape[:1] + units.shape[2:])
    return units.mean(axis=1), se


def value_paths(
    model: ModelSpec,
    fld: Any,
    t: float,
    xs: Any,
    theta: Any,
    mu: EmpiricalMeasure,
    cfg: SimConfig,
) -> np.ndarray:
    """Per-path value estimates, shape (n_paths, K); path m of every call shares increments."""
    require_value_data(model)
    xs = as_points(xs, model.dim_x, "x")
    theta = as_vector(theta, model.dim_theta, "theta")
    if float(t) == 0.0:
        values = np.asarray(model.U0(xs, theta, mu), dtype=float).reshape(xs.shape[0])
        return np.repeat(values[None, :], cfg.n_paths, axis=0)
    pairs = max(cfg.n_tagged // 2, 1)
    bank = NoiseBank(cfg.seed)
    samples = map_paths(
        lambda m: _tagged_path(model, fld, float(t), xs, theta, mu, cfg, pairs, m, bank, False).values,
        cfg.n_paths, cfg.workers,
    )
    return _per_path(samples, xs.shape[0], pairs).mean(axis=2)


def reconstruct_values(
    model: ModelSpec,
    fld: Any,
    t: float,
    xs: Any,
    theta: Any,
    mu: EmpiricalMeasure,
    cfg: SimConfig,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    U(t, x, θ, μ) = E[U0(x + √(2σ_x)B_t, θ_t, m_t) − Σ_s H(x + √(2σ_x)B_s, θ_s, m_s, W(t−s, ·)) dt]
    for every row of `xs`, with standard errors.

    (θ_s, m_s) follow the characteristics of the field; tagged points only
    diffuse, in antithetic pairs (cfg.n_tagged // 2 pairs per start point).
    All start points share the same (θ_s, m_s) paths.

    Raises:
        MissingCoefficientError: model without U0 or H.
    """
    require_value_data(model)
    xs = as_points(xs, model.dim_x, "x")
    theta = as_vector(theta, model.dim_theta, "theta")
    if float(t) == 0.0:
        values = np.asarray(model.U0(xs, theta, mu), dtype=float).reshape(xs.shape[0])
        return values, np.zeros_like(values)
    pairs = max(cfg.n_tagged // 2, 1)
    bank = NoiseBank(cfg.seed)
    samples = map_paths(
        lambda m: _tagged_path(model, fld, float(t), xs, theta, mu, cfg, pairs, m, bank, False).values,
        cfg.n_paths, cfg.workers,
    )
    return _reduce(samples, xs.shape[0], pairs)


def reconstruct_value(model: ModelSpec, fld: Any, t: float, x: Any, theta: Any, mu: EmpiricalMeasure, cfg: SimConfig) -> float:
    values, _ = reconstruct_values(model, fld, t, np.asarray(x, dtype=float).reshape(1, -1), theta, mu, cfg)
    return float(values[0])


def gradient_heat_kernel(
    model: ModelSpec,
    fld: Any,
    t: float,
    x: Any,
    theta: Any,
    mu: EmpiricalMeasure,
    cfg: SimConfig,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    ∇ₓU through the heat kernel: E[W0(X_t) − Σ_s H(X_s, ·)·B_s / (√(2σ_x)·max(s, dt)) dt].

    Returns (gradient (d,), standard error (d,)).

    Raises:
        ValueError: σ_x = 0 (use finite differences of reconstruct_value).
        MissingCoefficientError: model without U0 or H.
    """
    require_value_data(model)
    if model.sigma_x == 0.0:
        raise ValueError("heat-kernel gradient needs sigma_x > 0; use finite differences of reconstruct_value instead")
    xs = np.asarray(x, dtype=float).reshape(1, model.dim_x)
    theta = as_vector(theta, model.dim_theta, "theta")
    if float(t) == 0.0:
        return np.asarray(model.W0(xs, theta, mu), dtype=float).reshape(model.dim_x), np.zeros(model.dim_x)
    pairs = max(cfg.n_tagged // 2, 1)
    bank = NoiseBank(cfg.seed)
    samples = map_paths(
        lambda m: _tagged_path(model, fld, float(t), xs, theta, mu, cfg, pairs, m, bank, True).gradients,
        cfg.n_paths, cfg.workers,
    )
    grad, se = _reduce(samples, 1, pairs)
    return grad[0], se[0]


def finite_difference_gradient(model: ModelSpec, fld: Any, t: float, x: Any, theta: Any, mu: EmpiricalMeasure, cfg: SimConfig) -> np.ndarray:
    """Central differences of reconstruct_value with h = 1e-3·(1 + |x_j|); both sides share increments."""
    x = as_vector(x, model.dim_x, "x")
    grad = np.zeros(model.dim_x)
    for j in range(model.dim_x):
        h = FD_STEP * (1.0 + abs(x[j]))
        e = np.zeros(model.dim_x)
        e[j] = h
        up, _ = reconstruct_values(model, fld, t, (x + e)[None, :], theta, mu, cfg)
        down, _ = reconstruct_values(model, fld, t, (x - e)[None, :], theta, mu, cfg)
        grad[j] = (up[0] - down[0]) / (2.0 * h)
    return grad


@dataclass
class GradientCheck:
    discrepancy: float
    heat_kernel_discrepancy: Optional[float] = None
    rows: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {"discrepancy": self.discrepancy, "heat_kernel_discrepancy": self.heat_kernel_discrepancy,
                "rows": [dict(r) for r in self.rows]}


def check_gradient_consistency(
    model: ModelSpec,
    fld: Any,
    sample: Sequence[Tuple[float, Any, Any, EmpiricalMeasure]],
    cfg: SimConfig,
) -> GradientCheck:
    """
    Max over (t, x, θ, μ) of |FD gradient of U − W(t, x, θ, μ)|; with σ_x > 0
    the heat-kernel gradient is compared against the FD one as well.
    """
    require_value_data(model)
    check = GradientCheck(discrepancy=0.0, heat_kernel_discrepancy=0.0 if model.sigma_x > 0 else None)
    for t, x, theta, mu in sample:
        x = as_vector(x, model.dim_x, "x")
        fd = finite_difference_gradient(model, fld, t, x, theta, mu, cfg)
        w = np.asarray(fld.evaluate(t, x[None, :], theta, mu), dtype=float).reshape(model.dim_x)
        row: Dict[str, Any] = {"t": float(t), "x": x.tolist(), "fd": fd.tolist(), "field": w.tolist(),
                               "gap": float(np.max(np.abs(fd - w)))}
        check.discrepancy = max(check.discrepancy, row["gap"])
        if model.sigma_x > 0:
            hk, _ = gradient_heat_kernel(model, fld, t, x, theta, mu, cfg)
            row["heat_kernel"] = hk.tolist()
            row["heat_kernel_gap"] = float(np.max(np.abs(hk - fd)))
            check.heat_kernel_discrepancy = max(check.heat_kernel_discrepancy, row["heat_kernel_gap"])
        check.rows.append(row)
    logger.info("Gradient consistency on %s: max gap %.3e", model.name, check.discrepancy)
    return check
