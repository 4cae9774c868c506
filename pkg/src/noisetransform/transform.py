# src/noisetransform/transform.py
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from src.measures.empirical import EmpiricalMeasure
from src.measures.transport import pushforward_shift
from src.models.model_spec import ModelSpec

logger = logging.getLogger(__name__)


class TransformError(ValueError):
    """The base model cannot be turned into an extra-variable model."""


def split_theta(theta: np.ndarray, n_base: int) -> Tuple[np.ndarray, np.ndarray]:
    """(θ_base, shift) with the shift block last."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    return theta[:n_base], theta[n_base:]


def shift_scene(x: np.ndarray, theta: np.ndarray, mu: EmpiricalMeasure, n_base: int):
    """(y + s, θ_base, (id + s)_# m) for derived arguments (y, (θ_base, s), m)."""
    base, shift = split_theta(theta, n_base)
    return np.asarray(x, dtype=float) + shift, base, pushforward_shift(mu, shift)


def shifted_function(fn: Callable, n_base: int) -> Callable:
    """g̃(y, θ̂, m) = g(y + s, θ_base, (id + s)_# m)."""

    def wrapped(x, theta, mu):
        xs, base, pushed = shift_scene(x, theta, mu, n_base)
        return fn(xs, base, pushed)

    return wrapped


def shifted_coefficient(fn: Callable, n_base: int) -> Callable:
    """F̃(y, θ̂, m, w) = F(y + s, θ_base, (id + s)_# m, w); same for G and H."""

    def wrapped(x, theta, mu, w):
        xs, base, pushed = shift_scene(x, theta, mu, n_base)
        return fn(xs, base, pushed, w)

    return wrapped


@dataclass(frozen=True)
class TransformedModel:
    """
    base: model with additive common noise β > 0.
    derived: the same game in the variable y = x − s with s = √(2β)B^c carried
    as the last d components of θ; it has no common noise.
    """
    base: ModelSpec
    derived: ModelSpec

    @property
    def n_base(self) -> int:
        return self.base.dim_theta

    def derived_theta(self, theta_base, shift=None) -> np.ndarray:
        base = np.asarray(theta_base, dtype=float).reshape(-1)
        shift = np.zeros(self.base.dim_x) if shift is None else np.asarray(shift, dtype=float).reshape(-1)
        return np.concatenate([base, shift])


def transform_model(base: ModelSpec, concatenate_theta: bool = False) -> TransformedModel:
    """
    Move the common noise of `base` into an extra θ-block.

    The derived θ is (θ_base, s), s of dimension d with zero drift and
    diffusion β; every coefficient reads (y + s, θ_base, (id + s)_# m).

    Raises:
        TransformError: beta_cn = 0, or a base model with its own θ while
            concatenate_theta is False.
    """
    if base.beta_cn <= 0.0:
        raise TransformError(f"Model {base.name} has no common noise to transform (beta_cn = 0)")
    n, d = base.dim_theta, base.dim_x
    if n > 0 and not concatenate_theta:
        raise TransformError(
            f"Model {base.name} already carries a {n}-dimensional theta; pass concatenate_theta=True "
            f"to use a {n + d}-dimensional theta block"
        )

    def b(theta, mu, f_values=None):
        theta_b, shift = split_theta(theta, n)
        drift = np.asarray(base.b(theta_b, pushforward_shift(mu, shift), f_values), dtype=float).reshape(n)
        return np.concatenate([drift, np.zeros(d)])

    A: Optional[np.ndarray] = None
    if base.A is not None:
        A = np.zeros((n + d, n + d))
        A[:n, :n] = base.A

    derived = base.replace(
        name=f"{base.name}+shift",
        dim_theta=n + d,
        F=shifted_coefficient(base.F, n),
        G=shifted_coefficient(base.G, n),
        W0=shifted_function(base.W0, n),
        b=b,
        U0=None if base.U0 is None else shifted_function(base.U0, n),
        H=None if base.H is None else shifted_coefficient(base.H, n),
        f=None if base.f is None else shifted_function(base.f, n),
        sigma_theta=np.concatenate([base.sigma_theta, np.full(d, base.beta_cn)]),
        beta_cn=0.0,
        A=A,
        claims=(),
    )
    logger.debug("Transformed %s: theta dimension %d -> %d", base.name, n, n + d)
    return TransformedModel(base, derived)
