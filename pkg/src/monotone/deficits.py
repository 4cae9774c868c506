# src/monotone/deficits.py
from __future__ import annotations

from typing import Any, Callable, Optional

import numpy as np

from src.measures.empirical import Coupling, DimensionMismatchError, EmpiricalMeasure

ScalarMap = Callable[[np.ndarray, np.ndarray, EmpiricalMeasure], np.ndarray]
VectorMap = Callable[[np.ndarray, np.ndarray, EmpiricalMeasure], np.ndarray]
NoiseDriftMap = Callable[[np.ndarray, EmpiricalMeasure], np.ndarray]


def _theta(value: Any) -> np.ndarray:
    return np.asarray(value, dtype=float).reshape(-1)


def quadratic_term(A: Optional[np.ndarray], theta: Any, theta_tilde: Any) -> float:
    """½ (θ − θ̃)·A(θ − θ̃), or 0 without A."""
    if A is None:
        return 0.0
    diff = _theta(theta) - _theta(theta_tilde)
    return 0.5 * float(diff @ np.asarray(A, dtype=float) @ diff)


def flat_pairing(values_mu: np.ndarray, values_nu: np.ndarray) -> float:
    """⟨h, μ − ν⟩ from h evaluated at the particles of μ and of ν."""
    return float(np.mean(values_mu)) - float(np.mean(values_nu))


def flat_deficit(g: ScalarMap, mu: EmpiricalMeasure, nu: EmpiricalMeasure, theta: Any) -> float:
    """
    ⟨g(·, θ, μ) − g(·, θ, ν), μ − ν⟩ on particles.

    Raises:
        DimensionMismatchError: μ and ν on different spaces.
    """
    if not mu.same_space(nu):
        raise DimensionMismatchError("flat_deficit needs measures on the same space")
    th = _theta(theta)
    on_mu = np.asarray(g(mu.points, th, mu), dtype=float) - np.asarray(g(mu.points, th, nu), dtype=float)
    on_nu = np.asarray(g(nu.points, th, mu), dtype=float) - np.asarray(g(nu.points, th, nu), dtype=float)
    return flat_pairing(on_mu, on_nu)


def joint_flat_deficit(
    f: ScalarMap,
    b: NoiseDriftMap,
    A: Any,
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    theta: Any,
    theta_tilde: Any,
) -> float:
    """⟨f(·, θ, μ) − f(·, θ̃, ν), μ − ν⟩ + (b(θ, μ) − b(θ̃, ν))·A(θ − θ̃)."""
    if not mu.same_space(nu):
        raise DimensionMismatchError("joint_flat_deficit needs measures on the same space")
    th, tt = _theta(theta), _theta(theta_tilde)
    on_mu = np.asarray(f(mu.points, th, mu), dtype=float) - np.asarray(f(mu.points, tt, nu), dtype=float)
    on_nu = np.asarray(f(nu.points, th, mu), dtype=float) - np.asarray(f(nu.points, tt, nu), dtype=float)
    drift_gap = _theta(b(th, mu)) - _theta(b(tt, nu))
    return flat_pairing(on_mu, on_nu) + float(drift_gap @ (np.asarray(A, dtype=float) @ (th - tt)))


def l2_deficit(
    W_eval: VectorMap,
    coupling: Coupling,
    theta: Any,
    theta_tilde: Any,
    beta: float = 0.0,
    A: Optional[np.ndarray] = None,
) -> float:
    """
    [½(θ−θ̃)·A(θ−θ̃)] + mean (W(x_i, θ, μ) − W(y_i, θ̃, ν))·(x_i − y_i) − β·mean |W(x_i, θ, μ) − W(y_i, θ̃, ν)|²

    μ, ν are the marginals of the coupling. β = 0 and no A gives Z; with A it is Z^A_β.
    """
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    mu, nu = coupling.first_marginal, coupling.second_marginal
    th, tt = _theta(theta), _theta(theta_tilde)
    gap = np.asarray(W_eval(coupling.x, th, mu), dtype=float) - np.asarray(W_eval(coupling.y, tt, nu), dtype=float)
    gap = gap.reshape(coupling.x.shape)
    cross = float(np.mean(np.sum(gap * coupling.displacement(), axis=1)))
    value = quadratic_term(A, th, tt) + cross
    if beta:
        value -= beta * float(np.mean(np.sum(gap * gap, axis=1)))
    return value


def displacement_deficit(grad: VectorMap, coupling: Coupling, theta: Any = ()) -> float:
    """l2_deficit of a gradient map with β = 0 and no A."""
    return l2_deficit(grad, coupling, theta, theta)


def cocoercivity_deficits(grad: Callable[[np.ndarray], np.ndarray], L: float, coupling: Coupling) -> np.ndarray:
    """(∇U(x) − ∇U(y))·(x − y) − (1/L)|∇U(x) − ∇U(y)|² per pair."""
    L = float(L)
    if not L > 0:
        raise ValueError(f"L must be > 0, got {L}")
    gap = np.asarray(grad(coupling.x), dtype=float) - np.asarray(grad(coupling.y), dtype=float)
    gap = gap.reshape(coupling.x.shape)
    return np.sum(gap * (coupling.x - coupling.y), axis=1) - np.sum(gap * gap, axis=1) / L


def cocoercivity_check(grad: Callable[[np.ndarray], np.ndarray], L: float, samples: Coupling) -> float:
    """Minimum co-coercivity deficit with α = 1/L over the sampled pairs."""
    return float(np.min(cocoercivity_deficits(grad, L, samples)))
