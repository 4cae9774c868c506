# src/lipsolve/solver.py
from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.characteristics.engine import ParticleBlowUpError
from src.lipsolve.field import FieldApprox
from src.lipsolve.psi import LipsolveConfig, NoiseSpec, apply_psi
from src.measures.empirical import EmpiricalMeasure, pair_distances
from src.measures.transport import wasserstein_distance
from src.models.model_spec import ModelSpec
from src.models.oracle import OracleField
from src.models.sampling import SamplerConfig
from src.utils.validators import ensure_int, ensure_positive

logger = logging.getLogger(__name__)

AUDIT_SALT = 0xA0D1
LIPSCHITZ_VARIABLES = ("x", "theta", "measure")

# audit scene: (x (1, d), θ (n,), μ)
AuditScene = Tuple[np.ndarray, np.ndarray, EmpiricalMeasure]


@dataclass(frozen=True)
class PicardSettings:
    damping: float = 0.5
    tol: float = 1e-5
    max_iters: int = 100
    lipschitz_guard: float = 1e3
    growth_guard: float = 10.0

    def __post_init__(self) -> None:
        damping = float(self.damping)
        if not 0.0 < damping <= 1.0:
            raise ValueError(f"damping must be in (0, 1], got {self.damping}")
        object.__setattr__(self, "damping", damping)
        object.__setattr__(self, "tol", ensure_positive(self.tol, "tol"))
        object.__setattr__(self, "max_iters", ensure_int(self.max_iters, must_be_positive=True))
        object.__setattr__(self, "lipschitz_guard", ensure_positive(self.lipschitz_guard, "lipschitz_guard"))
        object.__setattr__(self, "growth_guard", ensure_positive(self.growth_guard, "growth_guard"))

    def to_dict(self) -> Dict[str, Any]:
        return {"damping": self.damping, "tol": self.tol, "max_iters": self.max_iters,
                "lipschitz_guard": self.lipschitz_guard, "growth_guard": self.growth_guard}


@dataclass(frozen=True)
class LipschitzProbe:
    """Sample spec for difference quotients: count, seed, largest step and the scene sampler."""
    samples: int = 16
    seed: int = 0
    radius: float = 0.5
    sampler: SamplerConfig = field(default_factory=lambda: SamplerConfig(cloud_size=16))

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", ensure_int(self.samples, must_be_positive=True))
        object.__setattr__(self, "radius", ensure_positive(self.radius, "radius"))


@dataclass
class SolveReport:
    """Picard history, per-time Lipschitz estimates of the last iterate, termination status."""
    horizon: float
    status: str = "max_iters"
    iterations: int = 0
    changes: List[float] = field(default_factory=list)
    lipschitz: List[Dict[str, float]] = field(default_factory=list)
    lipschitz_history: List[float] = field(default_factory=list)
    blow_up_time: Optional[float] = None
    blow_up_estimate: Optional[float] = None
    blow_up_variable: Optional[str] = None
    settings: Dict[str, Any] = field(default_factory=dict)
    audit: List[AuditScene] = field(default_factory=list, repr=False)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def blew_up(self) -> bool:
        return self.status == "blow_up"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "horizon": self.horizon,
            "status": self.status,
            "iterations": self.iterations,
            "changes": list(self.changes),
            "lipschitz": [dict(row) for row in self.lipschitz],
            "lipschitz_history": list(self.lipschitz_history),
            "blow_up_time": self.blow_up_time,
            "blow_up_estimate": self.blow_up_estimate,
            "blow_up_variable": self.blow_up_variable,
            "settings": dict(self.settings),
        }

    def to_text(self) -> str:
        lines = [f"horizon: {self.horizon:g}", f"status: {self.status}", f"iterations: {self.iterations}"]
        if self.changes:
            lines.append(f"last change: {self.changes[-1]:.3e}")
        if self.blew_up:
            lines.append(f"blow-up at t={self.blow_up_time:g} ({self.blow_up_variable} estimate {self.blow_up_estimate:.3e})")
        for row in self.lipschitz:
            lines.append("  t={t:.4f}  x={x:.4g}  theta={theta:.4g}  measure={measure:.4g}".format(**row))
        return "\n".join(lines) + "\n"


# ---------------------------
# Lipschitz estimates of a field
# ---------------------------
def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    norm = float(np.linalg.norm(v))
    return v / norm if norm > 0 else np.eye(dim)[0]


def _field_dims(fld: Any, dim_x: Optional[int], dim_theta: Optional[int], period: Optional[float]):
    basis = getattr(fld, "basis", None)
    if basis is not None:
        return basis.dim_x, basis.dim_theta, basis.period
    return dim_x or getattr(fld, "dim_x", 1), dim_theta or 0, period


def estimate_field_lipschitz(
    fld: Any,
    t: float,
    probe: Optional[LipschitzProbe] = None,
    dim_x: Optional[int] = None,
    dim_theta: Optional[int] = None,
    period: Optional[float] = None,
) -> Dict[str, float]:
    """
    Max sampled difference quotients of W(t, ·) in x, θ and μ.

    The measure quotient perturbs every particle of a sampled cloud and divides
    by the exact W_q (q = 2, or 1 on the torus) between the two clouds.
    """
    probe = probe or LipschitzProbe()
    d, n, period = _field_dims(fld, dim_x, dim_theta, period)
    q = 1.0 if period is not None else 2.0
    rng = np.random.default_rng(probe.seed)
    sampler = probe.sampler
    best = {name: 0.0 for name in LIPSCHITZ_VARIABLES}

    for _ in range(probe.samples):
        x = sampler.points(rng, 1, d, period)
        theta = sampler.theta(rng, n)
        mu = sampler.cloud(rng, d, period)
        base = fld.evaluate(t, x, theta, mu)

        h = probe.radius * 10.0 ** rng.uniform(-2.0, 0.0)
        x2 = x + h * _unit(rng, d)
        if period is not None:
            x2 = np.mod(x2, period)
        dx = float(pair_distances(x, x2, period)[0])
        if dx > 0:
            best["x"] = max(best["x"], float(np.linalg.norm(fld.evaluate(t, x2, theta, mu) - base)) / dx)

        if n:
            theta2 = theta + h * _unit(rng, n)
            dth = float(np.linalg.norm(theta2 - theta))
            if dth > 0:
                best["theta"] = max(best["theta"], float(np.linalg.norm(fld.evaluate(t, x, theta2, mu) - base)) / dth)

        nu = mu.with_points(mu.points + h * rng.standard_normal(mu.points.shape))
        dmu = wasserstein_distance(q, mu, nu)
        if dmu > 0:
            best["measure"] = max(best["measure"], float(np.linalg.norm(fld.evaluate(t, x, theta, nu) - base)) / dmu)
    return best


# ---------------------------
# Fixed point
# ---------------------------
def audit_scenes(cfg: LipsolveConfig, noise: NoiseSpec) -> List[AuditScene]:
    """`audit_size` scenes drawn once per solve, independent of the simulation noise."""
    rng = np.random.default_rng([cfg.sim.seed, AUDIT_SALT])
    scenes = []
    for _ in range(cfg.audit_size):
        x = cfg.sampler.points(rng, 1, noise.dim_x, noise.period)
        theta = cfg.sampler.theta(rng, noise.dim_theta)
        mu = cfg.sampler.cloud(rng, noise.dim_x, noise.period)
        scenes.append((x, theta, mu))
    return scenes


def _sup_change(old: FieldApprox, new: FieldApprox, audit: List[AuditScene]) -> float:
    worst = 0.0
    for t in new.times:
        for x, theta, mu in audit:
            worst = max(worst, float(np.max(np.abs(new.evaluate(t, x, theta, mu) - old.evaluate(t, x, theta, mu)))))
    return worst


class _FieldCache:
    """Remembers the last W evaluation of a step so drift, noise drift and source share it."""

    def __init__(self, fld: FieldApprox) -> None:
        self.fld = fld
        self._tau: Optional[float] = None
        self._mu: Optional[EmpiricalMeasure] = None
        self._theta: Optional[np.ndarray] = None
        self._points: Optional[np.ndarray] = None
        self._value: Optional[np.ndarray] = None

    def __call__(self, tau: float, points: Optional[np.ndarray], theta: np.ndarray, mu: EmpiricalMeasure) -> np.ndarray:
        # points=None asks for W on the cloud; cached rows start with the cloud particles
        hit = self._mu is mu and self._theta is theta and self._tau == tau
        if hit and (points is None or points is self._points):
            return self._value  # type: ignore[return-value]
        pts = mu.points if points is None else points
        value = self.fld.evaluate(tau, pts, theta, mu)
        self._tau, self._mu, self._theta, self._points, self._value = tau, mu, theta, pts, value
        return value


def picard_coefficients(model: ModelSpec, W: FieldApprox):
    """(A, B, E) = (F(·, W), b[W], G(·, W)) for one Picard step."""
    local = threading.local()

    def cache() -> _FieldCache:
        c = getattr(local, "cache", None)
        if c is None:
            c = local.cache = _FieldCache(W)
        return c

    def A(tau, x, theta, mu):
        return model.F(x, theta, mu, cache()(tau, x, theta, mu))

    def B(tau, theta, mu):
        return model.b(theta, mu, cache()(tau, None, theta, mu)[:mu.n])

    def E(tau, x, theta, mu):
        return model.G(x, theta, mu, cache()(tau, x, theta, mu))

    return A, B, E


def _lipschitz_profile(W: FieldApprox, probe: LipschitzProbe) -> List[Dict[str, float]]:
    rows = []
    for t in W.times:
        est = estimate_field_lipschitz(W, float(t), probe)
        rows.append({"t": float(t), **est})
    return rows


def _guard_trip(profile: List[Dict[str, float]], picard: PicardSettings) -> Optional[Tuple[float, float, str]]:
    for k, row in enumerate(profile):
        for var in LIPSCHITZ_VARIABLES:
            value = row[var]
            if not math.isfinite(value) or value > picard.lipschitz_guard:
                return row["t"], value, var
            if k > 0:
                growth = value / max(profile[k - 1][var], 1.0)
                if growth > picard.growth_guard:
                    return row["t"], value, var
    return None


def fixed_point_solve(
    model: ModelSpec,
    T: float,
    cfg: LipsolveConfig,
    picard: Optional[PicardSettings] = None,
    probe: Optional[LipschitzProbe] = None,
) -> Tuple[FieldApprox, SolveReport]:
    """
    Damped Picard iteration W ← (1 − damping)·W + damping·ψ(F(·,W), b[W], G(·,W), W0).

    Starts from W0 constant in time; every ψ call reuses the same increments.
    Stops on a change <= tol over the audit sample, on max_iters, or when the
    Lipschitz guard trips (status "blow_up", not an exception).
    """
    picard = picard or PicardSettings()
    probe = probe or LipschitzProbe(seed=cfg.sim.seed)
    cfg = cfg.with_horizon(T)
    noise = NoiseSpec.from_model(model)
    basis = cfg.basis_for(noise)
    times = cfg.grid_times()
    audit = audit_scenes(cfg, noise)

    report = SolveReport(horizon=float(T), settings=picard.to_dict(), audit=audit)
    lift_scenes = [(mu.points, theta, mu) for _, theta, mu in audit]
    W = FieldApprox.constant_in_time(basis, times, model.W0, lift_scenes)
    report.lipschitz = _lipschitz_profile(W, probe)

    for it in range(1, picard.max_iters + 1):
        A, B, E = picard_coefficients(model, W)
        try:
            psi = apply_psi(A, B, E, model.W0, cfg, noise, basis)
        except ParticleBlowUpError as exc:
            report.status = "blow_up"
            report.blow_up_time = exc.time if exc.time is not None else float(T)
            report.blow_up_estimate = exc.magnitude
            report.blow_up_variable = "particles"
            report.iterations = it
            logger.warning("Solve of %s stopped: %s", model.name, exc)
            return W, report

        new = W.blend(psi, picard.damping)
        report.iterations = it
        if not np.all(np.isfinite(new.coefficients)):
            report.status = "blow_up"
            report.blow_up_time, report.blow_up_estimate, report.blow_up_variable = float(T), math.inf, "coefficients"
            logger.warning("Solve of %s produced non-finite coefficients at iteration %d", model.name, it)
            return W, report

        change = _sup_change(W, new, audit)
        W = new
        report.changes.append(change)
        report.lipschitz = _lipschitz_profile(W, probe)
        report.lipschitz_history.append(max(max(row[v] for v in LIPSCHITZ_VARIABLES) for row in report.lipschitz))
        logger.debug("Picard iteration %d: change %.3e", it, change, extra={"model": model.name})

        trip = _guard_trip(report.lipschitz, picard)
        if trip is not None:
            report.status = "blow_up"
            report.blow_up_time, report.blow_up_estimate, report.blow_up_variable = trip
            logger.warning("Lipschitz guard tripped for %s at t=%.4g (%s = %.3e)", model.name, *trip)
            return W, report
        if change <= picard.tol:
            report.status = "converged"
            break

    if report.status != "converged":
        logger.warning("Picard iteration for %s did not converge in %d iterations", model.name, picard.max_iters)
    logger.info("Solved %s on [0, %g]: %s after %d iterations", model.name, T, report.status, report.iterations)
    return W, report


# ---------------------------
# Oracle comparison
# ---------------------------
def oracle_relative_error(fld: Any, params: Dict[str, Any], audit: List[AuditScene], times: Optional[np.ndarray] = None) -> float:
    """max |W − W_oracle| / max |W_oracle| over audit scenes × grid times."""
    times = np.asarray(fld.times if times is None else times, dtype=float)
    oracle = OracleField(params, float(times[-1]))
    num, den = 0.0, 0.0
    for t in times:
        for x, theta, mu in audit:
            ref = oracle.evaluate(float(t), x, theta, mu)
            num = max(num, float(np.max(np.abs(fld.evaluate(float(t), x, theta, mu) - ref))))
            den = max(den, float(np.max(np.abs(ref))))
    return num / den if den > 0 else num
