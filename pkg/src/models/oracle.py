# src/models/oracle.py
"""
Closed-form reference for the `lq` family.

With F = α_F w, G = κx + κ_m M, W0 = λx + λ_m M + e0 (M = mean of μ) the
affine ansatz W = a x + c M + e closes:

    ȧ = κ − α_F a²,            a(0) = λ
    ċ = κ_m − α_F c (2a + c),  c(0) = λ_m
    ė = −α_F (a + c) e,        e(0) = e0

and the value U = a x²/2 + c x M + e x + k M²/2 + l M + n adds

    k̇ = −α_F c² − 2 α_F k (a + c)
    l̇ = −α_F (c e + k e + l (a + c))
    ṅ = σ_x a − α_F e²/2 − α_F l e

with k, l, n starting at 0. θ does not enter (autonomous noise).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Mapping, Optional

import numpy as np
from scipy.integrate import quad, solve_ivp

from src.measures.empirical import EmpiricalMeasure

logger = logging.getLogger(__name__)

ORACLE_RTOL = 1e-10
ORACLE_ATOL = 1e-12
EXPLOSION_LEVEL = 1e8


class OracleBlowUpError(RuntimeError):
    """The Riccati system itself explodes inside the requested horizon."""

    def __init__(self, time: float) -> None:
        super().__init__(f"Riccati oracle explodes near t={time:.6g}")
        self.time = time


@dataclass(frozen=True)
class LQParams:
    alpha_F: float = 1.0
    kappa: float = 1.0
    kappa_m: float = 0.5
    lam: float = 0.5
    lam_m: float = 0.25
    e0: float = 0.1
    sigma_x: float = 0.5

    @classmethod
    def from_mapping(cls, params: Mapping[str, Any]) -> "LQParams":
        names = cls.__dataclass_fields__.keys()
        return cls(**{k: float(v) for k, v in params.items() if k in names})


def _field_rhs(p: LQParams):
    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        a, c, e = y[0], y[1], y[2]
        return np.array([
            p.kappa - p.alpha_F * a * a,
            p.kappa_m - p.alpha_F * c * (2.0 * a + c),
            -p.alpha_F * (a + c) * e,
        ])
    return rhs


def _value_rhs(p: LQParams):
    field_rhs = _field_rhs(p)

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        a, c, e, k, l = y[0], y[1], y[2], y[3], y[4]
        head = field_rhs(t, y[:3])
        return np.concatenate([head, [
            -p.alpha_F * c * c - 2.0 * p.alpha_F * k * (a + c),
            -p.alpha_F * (c * e + k * e + l * (a + c)),
            p.sigma_x * a - 0.5 * p.alpha_F * e * e - p.alpha_F * l * e,
        ]])
    return rhs


def _explosion_event(t: float, y: np.ndarray) -> float:
    return EXPLOSION_LEVEL - float(np.max(np.abs(y)))


_explosion_event.terminal = True  # type: ignore[attr-defined]


class LQOracle:
    """Dense solution of the coefficient ODEs on [0, horizon]."""

    def __init__(self, params: Mapping[str, Any] | LQParams, horizon: float, method: str = "RK45", with_value: bool = True) -> None:
        self.params = params if isinstance(params, LQParams) else LQParams.from_mapping(params)
        self.horizon = float(horizon)
        if self.horizon < 0:
            raise ValueError(f"horizon must be >= 0, got {horizon}")
        p = self.params
        y0 = np.array([p.lam, p.lam_m, p.e0] + ([0.0, 0.0, 0.0] if with_value else []))
        self._rhs = _value_rhs(p) if with_value else _field_rhs(p)
        self.with_value = with_value
        if self.horizon == 0.0:
            self._y0 = y0
            self._sol = None
            return
        sol = solve_ivp(
            self._rhs, (0.0, self.horizon), y0, method=method,
            rtol=ORACLE_RTOL, atol=ORACLE_ATOL, dense_output=True, events=_explosion_event,
        )
        if sol.status != 0:
            t_fail = float(sol.t[-1])
            logger.info("LQ oracle stops at t=%.6g (status %s)", t_fail, sol.status)
            raise OracleBlowUpError(t_fail)
        self._y0 = y0
        self._sol = sol.sol

    def coefficients(self, t: float) -> np.ndarray:
        t = float(t)
        if t < 0 or t > self.horizon + 1e-12:
            raise ValueError(f"t={t} outside [0, {self.horizon}]")
        if self._sol is None or t == 0.0:
            return self._y0.copy()
        return np.asarray(self._sol(t), dtype=float)

    def field(self, t: float, x: Any, mean_mu: Any) -> np.ndarray:
        a, c, e = self.coefficients(t)[:3]
        return a * np.asarray(x, dtype=float) + c * np.asarray(mean_mu, dtype=float) + e

    def value(self, t: float, x: Any, mean_mu: Any) -> np.ndarray:
        if not self.with_value:
            raise ValueError("oracle built without value coefficients")
        a, c, e, k, l, n = self.coefficients(t)
        x = np.asarray(x, dtype=float)
        M = np.asarray(mean_mu, dtype=float)
        return 0.5 * a * x * x + c * x * M + e * x + 0.5 * k * M * M + l * M + n

    def integral_residual(self, n_grid: int = 21) -> float:
        """max_k |y(t_{k+1}) − y(t_k) − ∫ rhs(y)| over a uniform grid."""
        if self._sol is None:
            return 0.0
        grid = np.linspace(0.0, self.horizon, n_grid)
        worst = 0.0
        for t0, t1 in zip(grid[:-1], grid[1:]):
            jump = self._sol(t1) - self._sol(t0)
            for j in range(jump.shape[0]):
                integral, _ = quad(lambda s: self._rhs(s, self._sol(s))[j], t0, t1, epsabs=1e-13, epsrel=1e-12)
                worst = max(worst, abs(jump[j] - integral))
        return float(worst)


def lq_riccati_oracle(params: Mapping[str, Any], t: float, x: Any, mean_mu: Any, method: str = "RK45") -> np.ndarray:
    """
    W(t, x, μ) = a(t) x + c(t) mean(μ) + e(t) for the `lq` family.

    Raises:
        OracleBlowUpError: the Riccati coefficients explode before `t`.
    """
    return LQOracle(params, t, method=method, with_value=False).field(t, x, mean_mu)


def lq_value_oracle(params: Mapping[str, Any], t: float, x: Any, mean_mu: Any) -> np.ndarray:
    """U(t, x, μ) from the quadratic value ansatz (see module docstring)."""
    return LQOracle(params, t).value(t, x, mean_mu)


class OracleField:
    """The oracle as a field object: evaluate(t, x, theta, mu) -> (K, 1)."""

    def __init__(self, params: Mapping[str, Any], horizon: float) -> None:
        self.oracle = LQOracle(params, horizon)
        self.horizon = float(horizon)

    def evaluate(self, t: float, x: np.ndarray, theta: np.ndarray, mu: EmpiricalMeasure) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, 1)
        return self.oracle.field(t, x, mu.mean()[0])

    def lipschitz_x(self, t: float) -> float:
        return abs(float(self.oracle.coefficients(t)[0]))


def oracle_field(params: Mapping[str, Any], horizon: float) -> OracleField:
    return OracleField(params, horizon)
