# src/models/builtins.py
from __future__ import annotations

import logging
from typing import Any, Callable, Dict, Mapping, Optional, Tuple

import numpy as np

from src.measures.empirical import EmpiricalMeasure
from src.models.model_spec import ModelSpec
from src.monotone.certificates import joint_certificate_search

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi

ModelBuilder = Callable[[Dict[str, float]], ModelSpec]


class UnknownModelError(KeyError):
    """No built-in or registered model carries this name."""


def _mean1(mu: EmpiricalMeasure) -> float:
    return float(mu.mean()[0])


def _theta1(theta: np.ndarray) -> float:
    return float(theta[0]) if len(theta) else 0.0


# ==============================
# Linear-quadratic family
# ==============================

LQ_DEFAULTS: Dict[str, float] = {
    "alpha_F": 1.0, "kappa": 1.0, "kappa_m": 0.5, "lam": 0.5, "lam_m": 0.25, "e0": 0.1,
    "r_theta": 1.0, "sigma_x": 0.5, "sigma_theta": 0.2, "beta_cn": 0.0, "alpha_mono": 0.25,
    "dim_theta": 1,
}

BLOWUP_DEFAULTS: Dict[str, float] = dict(
    LQ_DEFAULTS, kappa=-1.0, kappa_m=-1.0, lam=-0.5, lam_m=-0.5, e0=0.0, alpha_mono=0.0,
)


def _lq_family(p: Dict[str, float], name: str, claims: Tuple[str, ...]) -> ModelSpec:
    aF, k, km = p["alpha_F"], p["kappa"], p["kappa_m"]
    lam, lam_m, e0, r = p["lam"], p["lam_m"], p["e0"], p["r_theta"]

    def F(x, theta, mu, w):
        return aF * w

    def G(x, theta, mu, w):
        return k * x + km * _mean1(mu)

    def W0(x, theta, mu):
        return lam * x + lam_m * _mean1(mu) + e0

    def U0(x, theta, mu):
        x = x[:, 0]
        return 0.5 * lam * x * x + lam_m * x * _mean1(mu) + e0 * x

    def H(x, theta, mu, p_):
        x, p_ = x[:, 0], p_[:, 0]
        return 0.5 * aF * p_ * p_ - 0.5 * k * x * x - km * x * _mean1(mu)

    def b(theta, mu, f_values=None):
        return r * theta

    return ModelSpec(
        name=name, dim_x=1, dim_theta=int(p["dim_theta"]), F=F, G=G, W0=W0, b=b, U0=U0, H=H,
        sigma_x=p["sigma_x"], sigma_theta=p["sigma_theta"], beta_cn=p["beta_cn"],
        alpha_H=0.5 * aF, alpha_mono=p["alpha_mono"], params=p, claims=claims,
    )


def _build_lq(p: Dict[str, float]) -> ModelSpec:
    return _lq_family(p, "lq", ("l2_w0", "l2_fg"))


def _build_blowup(p: Dict[str, float]) -> ModelSpec:
    return _lq_family(p, "blowup_nonmonotone", ())


# ==============================
# Price / production (separated Hamiltonian, joint (f, Ab) monotonicity)
# ==============================

PRICE_DEFAULTS: Dict[str, float] = {
    "r": 1.0, "alpha": 1.0, "c2": 1.0, "u0": 1.0, "sigma_x": 0.3, "sigma_theta": 0.2,
}


def _build_price(p: Dict[str, float]) -> ModelSpec:
    r, alpha, c2, u0 = p["r"], p["alpha"], p["c2"], p["u0"]
    if alpha <= 0:
        raise ValueError(f"price_production needs alpha > 0, got {alpha}")

    def f(x, theta, mu):
        x = x[:, 0]
        return x * _theta1(theta) - 0.5 * c2 * x * x

    def H(x, theta, mu, p_):
        return 0.5 * np.sum(p_ * p_, axis=1) - f(x, theta, mu)

    def F(x, theta, mu, w):
        return w

    def G(x, theta, mu, w):
        return _theta1(theta) - c2 * x

    def U0(x, theta, mu):
        return 0.5 * u0 * x[:, 0] ** 2

    def W0(x, theta, mu):
        return u0 * x

    def b(theta, mu, f_values=None):
        return r * theta - alpha * _mean1(mu)

    return ModelSpec(
        name="price_production", dim_x=1, dim_theta=1, F=F, G=G, W0=W0, b=b, U0=U0, H=H, f=f,
        sigma_x=p["sigma_x"], sigma_theta=p["sigma_theta"], alpha_H=0.5,
        A=np.array([[1.0 / alpha]]), params=p, claims=("joint_flat", "flat_u0", "flat_f"),
    )


# ==============================
# Separated Hamiltonian on the circle
# ==============================

TORUS_DEFAULTS: Dict[str, float] = {
    "period": 1.0, "kappa": 0.5, "kappa0": 0.5, "eps": 0.2, "r": 1.0,
    "sigma_x": 0.1, "sigma_theta": 0.2,
}


def _build_torus(p: Dict[str, float]) -> ModelSpec:
    L, kappa, kappa0, eps, r = p["period"], p["kappa"], p["kappa0"], p["eps"], p["r"]
    w = TWO_PI / L

    def moments(mu):
        return float(np.mean(np.cos(w * mu.points[:, 0]))), float(np.mean(np.sin(w * mu.points[:, 0])))

    def kernel(x, mu):
        # mean_y cos w(x − y) and its x-derivative
        C, S = moments(mu)
        c, s = np.cos(w * x), np.sin(w * x)
        return c * C + s * S, w * (c * S - s * C)

    def f(x, theta, mu):
        k, _ = kernel(x[:, 0], mu)
        return kappa * k + eps * _theta1(theta) * np.sin(w * x[:, 0])

    def G(x, theta, mu, p_):
        _, dk = kernel(x, mu)
        return kappa * dk + eps * _theta1(theta) * w * np.cos(w * x)

    def H(x, theta, mu, p_):
        return 0.5 * np.sum(p_ * p_, axis=1) - f(x, theta, mu)

    def F(x, theta, mu, p_):
        return p_

    def U0(x, theta, mu):
        k, _ = kernel(x[:, 0], mu)
        return kappa0 * k

    def W0(x, theta, mu):
        _, dk = kernel(x, mu)
        return kappa0 * dk

    def b(theta, mu, f_values=None):
        return r * theta

    return ModelSpec(
        name="torus_monotone", dim_x=1, dim_theta=1, F=F, G=G, W0=W0, b=b, U0=U0, H=H, f=f,
        sigma_x=p["sigma_x"], sigma_theta=p["sigma_theta"], alpha_H=0.5,
        domain="torus", period=L, params=p, claims=("flat_u0", "flat_f"),
    )


# ==============================
# Quadratic Hamiltonian with a joint certificate
# ==============================

QUADRATIC_DEFAULTS: Dict[str, float] = {
    "alpha_G": 1.0, "alpha_F": 1.0, "alpha_b": 1.0, "dtheta_G": 1.0, "b_lip": 1.0,
    "sigma_x": 0.3, "sigma_theta": 0.2, "alpha_mono": 0.1,
}


def _build_quadratic(p: Dict[str, float]) -> ModelSpec:
    aG, aF, ab, gth, blip = p["alpha_G"], p["alpha_F"], p["alpha_b"], p["dtheta_G"], p["b_lip"]
    cert = joint_certificate_search(aG, aF, ab, gth, blip)
    if not cert.feasible:
        raise ValueError(f"quadratic_certified parameters admit no certificate: {cert.reason}")
    a = cert.midpoint

    def F(x, theta, mu, w):
        return aF * w

    def G(x, theta, mu, w):
        return aG * x + gth * _theta1(theta)

    def W0(x, theta, mu):
        return np.array(x, dtype=float)

    def U0(x, theta, mu):
        return 0.5 * x[:, 0] ** 2

    def H(x, theta, mu, p_):
        x, p_ = x[:, 0], p_[:, 0]
        return 0.5 * aF * p_ * p_ - 0.5 * aG * x * x - gth * _theta1(theta) * x

    def b(theta, mu, f_values=None):
        pushed = 0.0 if f_values is None else float(np.mean(f_values[:, 0]))
        return ab * theta + blip * pushed

    return ModelSpec(
        name="quadratic_certified", dim_x=1, dim_theta=1, F=F, G=G, W0=W0, b=b, U0=U0, H=H,
        sigma_x=p["sigma_x"], sigma_theta=p["sigma_theta"], alpha_H=0.5 * aF, alpha_mono=p["alpha_mono"],
        A=np.array([[a]]), params=dict(p, certificate_a=a), claims=("l2_w0", "l2_fg"),
    )


# ==============================
# Registry
# ==============================

_REGISTRY: Dict[str, Tuple[ModelBuilder, Dict[str, float]]] = {
    "lq": (_build_lq, LQ_DEFAULTS),
    "price_production": (_build_price, PRICE_DEFAULTS),
    "torus_monotone": (_build_torus, TORUS_DEFAULTS),
    "blowup_nonmonotone": (_build_blowup, BLOWUP_DEFAULTS),
    "quadratic_certified": (_build_quadratic, QUADRATIC_DEFAULTS),
}


def available_models() -> Tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


def default_params(name: str) -> Dict[str, float]:
    if name not in _REGISTRY:
        raise UnknownModelError(name)
    return dict(_REGISTRY[name][1])


def register_model(name: str, builder: ModelBuilder, defaults: Optional[Mapping[str, float]] = None) -> None:
    """Register a custom model builder under `name` (programmatic only)."""
    if not name or not isinstance(name, str):
        raise ValueError(f"Model name must be a non-empty string, got {name!r}")
    _REGISTRY[name] = (builder, dict(defaults or {}))


def builtin_model(name: str, params: Optional[Mapping[str, Any]] = None) -> ModelSpec:
    """
    Build a model by name, overriding its default parameters with `params`.

    Raises:
        UnknownModelError: unknown name.
        ValueError: unknown parameter name or invalid value.
    """
    if name not in _REGISTRY:
        raise UnknownModelError(f"Unknown model {name!r}; available: {', '.join(available_models())}")
    builder, defaults = _REGISTRY[name]
    merged = dict(defaults)
    for key, value in (params or {}).items():
        if key not in defaults:
            raise ValueError(f"Model {name!r} has no parameter {key!r}")
        try:
            merged[key] = float(value)
        except (TypeError, ValueError):
            raise ValueError(f"Parameter {key!r} of model {name!r} must be numeric, got {value!r}")
    logger.debug("Building model %s with %s", name, merged)
    return builder(merged)
