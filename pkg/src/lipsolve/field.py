# src/lipsolve/field.py
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from sklearn.linear_model import LinearRegression
from sklearn.preprocessing import PolynomialFeatures

from src.measures.empirical import EmpiricalMeasure
from src.utils.validators import as_points, ensure_int

logger = logging.getLogger(__name__)

FIELD_FORMAT = "field-approx"
FIELD_VERSION = 1
TIME_SLACK = 1e-12


class FieldSupportError(ValueError):
    """The field was evaluated at a time outside its grid."""

    def __init__(self, t: float, horizon: float) -> None:
        super().__init__(f"Field evaluated at t={t!r}, outside its support [0, {horizon!r}]")
        self.t = t
        self.horizon = horizon


def _check_time(t: float, lo: float, hi: float) -> float:
    t = float(t)
    slack = TIME_SLACK * max(1.0, abs(hi))
    if not (lo - slack <= t <= hi + slack):
        raise FieldSupportError(t, hi)
    return min(max(t, lo), hi)


@dataclass(frozen=True)
class FieldBasis:
    """
    Polynomial features of z = (x, θ, mean μ, mean |y|² under μ).

    On the torus x is replaced by (sin, cos)(2πx/L) per axis and the moments
    by the μ-averages of the same pair. Exponents are the monomials of total
    degree <= `degree`, constant term first.
    """
    dim_x: int
    dim_theta: int
    degree: int = 2
    period: Optional[float] = None
    powers: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "dim_x", ensure_int(self.dim_x, must_be_positive=True))
        object.__setattr__(self, "dim_theta", ensure_int(self.dim_theta, minimum=0))
        object.__setattr__(self, "degree", ensure_int(self.degree, minimum=0))
        if self.period is not None:
            object.__setattr__(self, "period", float(self.period))
        poly = PolynomialFeatures(degree=self.degree, include_bias=True).fit(np.zeros((1, self.n_inputs)))
        powers = np.array(poly.powers_, dtype=float)
        powers.setflags(write=False)
        object.__setattr__(self, "powers", powers)

    @property
    def n_inputs(self) -> int:
        d, n = self.dim_x, self.dim_theta
        return (4 * d + n) if self.period is not None else (2 * d + n + 1)

    @property
    def n_features(self) -> int:
        return int(self.powers.shape[0])

    def inputs(self, x: np.ndarray, theta: np.ndarray, mu: EmpiricalMeasure) -> np.ndarray:
        x = as_points(x, self.dim_x, "x")
        K = x.shape[0]
        th = np.broadcast_to(np.asarray(theta, dtype=float).reshape(-1), (K, self.dim_theta))
        if self.period is None:
            moments = np.concatenate([mu.mean(), [mu.second_moment()]])
            return np.hstack([x, th, np.broadcast_to(moments, (K, moments.size))])
        w = 2.0 * np.pi / self.period
        y = mu.points
        moments = np.concatenate([np.sin(w * y).mean(axis=0), np.cos(w * y).mean(axis=0)])
        return np.hstack([np.sin(w * x), np.cos(w * x), th, np.broadcast_to(moments, (K, moments.size))])

    def features(self, x: np.ndarray, theta: np.ndarray, mu: EmpiricalMeasure) -> np.ndarray:
        z = self.inputs(x, theta, mu)
        return np.prod(z[:, None, :] ** self.powers[None, :, :], axis=2)

    def to_dict(self) -> Dict[str, Any]:
        return {"dim_x": self.dim_x, "dim_theta": self.dim_theta, "degree": self.degree, "period": self.period}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FieldBasis":
        return cls(int(data["dim_x"]), int(data["dim_theta"]), int(data["degree"]), data.get("period"))


def fit_coefficients(features: np.ndarray, targets: np.ndarray) -> Tuple[np.ndarray, float]:
    """Least squares without intercept (the basis carries its own constant). Returns (coef, rms residual)."""
    reg = LinearRegression(fit_intercept=False).fit(features, targets)
    coef = np.asarray(reg.coef_, dtype=float).reshape(targets.shape[1], features.shape[1]).T
    resid = targets - features @ coef
    return coef, float(np.sqrt(np.mean(resid ** 2)))


@dataclass(frozen=True)
class FieldApprox:
    """
    W(t, x, θ, μ) as basis · coefficients on a time grid, linear in t between grid times.

    coefficients: (len(times), n_features, d); residuals: rms fit residual per grid time.
    """
    basis: FieldBasis
    times: np.ndarray
    coefficients: np.ndarray
    residuals: np.ndarray

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=float).reshape(-1)
        coef = np.array(self.coefficients, dtype=float)
        if times.size < 1 or times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ValueError("Field time grid must start at 0 and increase strictly")
        expected = (times.size, self.basis.n_features, self.basis.dim_x)
        if coef.shape != expected:
            raise ValueError(f"coefficients must have shape {expected}, got {coef.shape}")
        res = np.zeros(times.size) if self.residuals is None else np.array(self.residuals, dtype=float).reshape(times.size)
        for arr in (times, coef, res):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "residuals", res)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def coefficients_at(self, t: float) -> np.ndarray:
        t = _check_time(t, 0.0, self.horizon)
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        if k >= self.times.size - 1:
            return self.coefficients[-1]
        t0, t1 = self.times[k], self.times[k + 1]
        lam = (t - t0) / (t1 - t0)
        if lam == 0.0:
            return self.coefficients[k]
        return (1.0 - lam) * self.coefficients[k] + lam * self.coefficients[k + 1]

    def evaluate(self, t: float, x: np.ndarray, theta: np.ndarray, mu: EmpiricalMeasure) -> np.ndarray:
        """
        Raises:
            FieldSupportError: t outside [0, horizon].
        """
        coef = self.coefficients_at(t)
        return self.basis.features(x, theta, mu) @ coef

    # ---------------------------
    # Construction / algebra
    # ---------------------------
    @classmethod
    def from_fits(cls, basis: FieldBasis, times: np.ndarray, fits) -> "FieldApprox":
        coefs = np.stack([c for c, _ in fits])
        return cls(basis, times, coefs, np.array([r for _, r in fits]))

    @classmethod
    def constant_in_time(
        cls,
        basis: FieldBasis,
        times: np.ndarray,
        fn: Callable[[np.ndarray, np.ndarray, EmpiricalMeasure], np.ndarray],
        scenes,
    ) -> "FieldApprox":
        """Fit fn(x, θ, μ) once on `scenes` (iterable of (x, θ, μ)) and repeat it at every grid time."""
        feats, targets = [], []
        for x, theta, mu in scenes:
            feats.append(basis.features(x, theta, mu))
            targets.append(np.asarray(fn(x, theta, mu), dtype=float).reshape(-1, basis.dim_x))
        coef, resid = fit_coefficients(np.vstack(feats), np.vstack(targets))
        times = np.asarray(times, dtype=float)
        return cls(basis, times, np.repeat(coef[None], times.size, axis=0), np.full(times.size, resid))

    def blend(self, other: "FieldApprox", weight: float) -> "FieldApprox":
        """(1 − weight)·self + weight·other on a shared basis and grid."""
        if self.basis != other.basis or not np.array_equal(self.times, other.times):
            raise ValueError("Fields must share basis and time grid to be blended")
        coef = (1.0 - weight) * self.coefficients + weight * other.coefficients
        return FieldApprox(self.basis, self.times, coef, other.residuals)

    # ---------------------------
    # Serialization
    # ---------------------------
    def to_dict(self) -> Dict[str, Any]:
        return {
            "format": FIELD_FORMAT,
            "version": FIELD_VERSION,
            "basis": self.basis.to_dict(),
            "times": self.times.tolist(),
            "coefficients": self.coefficients.tolist(),
            "residuals": self.residuals.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FieldApprox":
        data = json.loads(text)
        if data.get("format") != FIELD_FORMAT:
            raise ValueError(f"Not a field document: format={data.get('format')!r}")
        if data.get("version") != FIELD_VERSION:
            raise ValueError(f"Unsupported field document version {data.get('version')!r}")
        return cls(FieldBasis.from_dict(data["basis"]), data["times"], data["coefficients"], data["residuals"])


class CallableField:
    """Wrap fn(t, x, θ, μ) -> (K, d) so closed forms can stand in for a fitted field."""

    def __init__(self, fn: Callable[[float, np.ndarray, np.ndarray, EmpiricalMeasure], np.ndarray], horizon: float, dim_x: int = 1) -> None:
        self.fn = fn
        self.horizon = float(horizon)
        self.dim_x = dim_x

    def evaluate(self, t: float, x: np.ndarray, theta: np.ndarray, mu: EmpiricalMeasure) -> np.ndarray:
        t = _check_time(t, 0.0, self.horizon)
        x = as_points(x, self.dim_x, "x")
        return np.asarray(self.fn(t, x, theta, mu), dtype=float).reshape(x.shape[0], self.dim_x)


def frozen_field(fn: Callable[[np.ndarray, np.ndarray, EmpiricalMeasure], np.ndarray], horizon: float, dim_x: int = 1) -> CallableField:
    """A time-independent field from fn(x, θ, μ)."""
    return CallableField(lambda t, x, theta, mu: fn(x, theta, mu), horizon, dim_x)
