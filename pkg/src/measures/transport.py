# src/measures/transport.py
from __future__ import annotations

import logging
import math
from typing import Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from src.measures.empirical import (
    Coupling,
    DimensionMismatchError,
    EmpiricalMeasure,
    axis_gaps,
)
from src.utils.validators import as_vector

logger = logging.getLogger(__name__)

DEFAULT_PARTICLE_CAP = 256


class ParticleCapError(ValueError):
    """The assignment problem would exceed the configured particle cap; subsample first."""

    def __init__(self, count: int, cap: int) -> None:
        super().__init__(f"Assignment needs {count} particles per side, cap is {cap}; subsample the clouds")
        self.count = count
        self.cap = cap


def _check_order(q: float) -> float:
    q = float(q)
    if not q >= 1:
        raise ValueError(f"Wasserstein order must be >= 1, got {q}")
    return q


def _aligned_points(mu: EmpiricalMeasure, nu: EmpiricalMeasure, cap: int, needs_cap: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Replicate both clouds to a common particle count."""
    if not mu.same_space(nu):
        raise DimensionMismatchError(
            f"Measures live on different spaces: dim {mu.dim} vs {nu.dim}, period {mu.period} vs {nu.period}"
        )
    common = mu.n * nu.n // math.gcd(mu.n, nu.n)
    if needs_cap and common > cap:
        raise ParticleCapError(common, cap)
    if common > cap and mu.n != nu.n:
        raise ParticleCapError(common, cap)
    x = np.repeat(mu.points, common // mu.n, axis=0)
    y = np.repeat(nu.points, common // nu.n, axis=0)
    return x, y


def _cost_matrix(x: np.ndarray, y: np.ndarray, q: float, period) -> np.ndarray:
    gaps = axis_gaps(x[:, None, :], y[None, :, :], period)
    return np.sqrt(np.sum(gaps ** 2, axis=2)) ** q


def _optimal_pairs(q: float, mu: EmpiricalMeasure, nu: EmpiricalMeasure, cap: int) -> Tuple[np.ndarray, np.ndarray]:
    sortable = mu.dim == 1 and not mu.is_torus
    x, y = _aligned_points(mu, nu, cap, needs_cap=not sortable)
    if sortable:
        # monotone rearrangement is optimal on the line for every q >= 1
        ix = np.argsort(x[:, 0], kind="stable")
        iy = np.argsort(y[:, 0], kind="stable")
        return x[ix], y[iy]
    rows, cols = linear_sum_assignment(_cost_matrix(x, y, q, mu.period))
    return x[rows], y[cols]


def wasserstein_distance(q: float, mu: EmpiricalMeasure, nu: EmpiricalMeasure, cap: int = DEFAULT_PARTICLE_CAP) -> float:
    """
    Exact W_q between two uniform empirical measures.

    d = 1 on the line uses sort matching, with no cap when the counts are equal;
    otherwise an exact assignment. Unequal counts are replicated to lcm(N, M)
    particles on both routes.

    Raises:
        DimensionMismatchError: different dimension or domain.
        ParticleCapError: an assignment on more than `cap` particles, or line clouds
            of unequal counts whose lcm exceeds `cap`.
    """
    return optimal_coupling(q, mu, nu, cap).cost(_check_order(q)) ** (1.0 / float(q))


def optimal_coupling(q: float, mu: EmpiricalMeasure, nu: EmpiricalMeasure, cap: int = DEFAULT_PARTICLE_CAP) -> Coupling:
    """Return a coupling whose cost attains W_q(mu, nu)^q."""
    q = _check_order(q)
    x, y = _optimal_pairs(q, mu, nu, cap)
    return Coupling(x, y, mu.period)


def pushforward_shift(mu: EmpiricalMeasure, theta) -> EmpiricalMeasure:
    """(id + θ)_# μ: every particle translated by θ (re-reduced on the torus)."""
    try:
        shift = as_vector(theta, mu.dim, "shift")
    except ValueError as exc:
        raise DimensionMismatchError(str(exc)) from exc
    if not np.any(shift):
        return mu
    return mu.with_points(mu.points + shift)


def moment(mu: EmpiricalMeasure, q: float) -> float:
    """((1/N) Σ |x_i|^q)^{1/q}."""
    q = _check_order(q)
    norms = np.sqrt(np.sum(mu.points ** 2, axis=1))
    return float(np.mean(norms ** q) ** (1.0 / q))
