# src/monotone/propagation.py
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np

from src.characteristics.paths import SimConfig
from src.characteristics.simulate import doubled_gradient_gap, simulate_doubled
from src.lipsolve.value import MissingCoefficientError, require_value_data, value_paths
from src.measures.empirical import Coupling, DimensionMismatchError, EmpiricalMeasure
from src.models.lipschitz import estimate_lipschitz_constants
from src.models.model_spec import ModelSpec
from src.models.sampling import SamplerConfig
from src.monotone.certificates import BetaSchedule, beta_schedule
from src.monotone.deficits import l2_deficit, quadratic_term
from src.monotone.probes import Probe
from src.monotone.report import MonotoneReport, ProbeResult

logger = logging.getLogger(__name__)


def _mean_and_se(per_path: np.ndarray) -> tuple:
    M = per_path.shape[0]
    se = float(per_path.std(ddof=1) / np.sqrt(M)) if M > 1 else 0.0
    return float(per_path.mean()), se


def flat_value_pairing_paths(
    model: ModelSpec,
    fld: Any,
    t: float,
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    theta: Any,
    theta_tilde: Any,
    cfg: SimConfig,
) -> np.ndarray:
    """
    Per path, [½A-term +] ⟨U(t, ·, θ, μ) − U(t, ·, θ̃, ν), μ − ν⟩ with U from value_paths.

    Both reconstructions share increments path by path.
    """
    if not mu.same_space(nu):
        raise DimensionMismatchError("flat pairing needs measures on the same space")
    pts = np.vstack([mu.points, nu.points])
    on_mu = value_paths(model, fld, t, pts, theta, mu, cfg)
    on_nu = value_paths(model, fld, t, pts, theta_tilde, nu, cfg)
    gap = on_mu - on_nu
    pairing = gap[:, :mu.n].mean(axis=1) - gap[:, mu.n:].mean(axis=1)
    return pairing + quadratic_term(model.A, theta, theta_tilde)


def _field_at(model: ModelSpec, fld: Any, t: float):
    if float(t) == 0.0:
        return model.W0
    return lambda x, theta, mu: fld.evaluate(t, x, theta, mu)


def zbeta_propagation_probe(
    model: ModelSpec,
    fld: Any,
    T: float,
    probes: Sequence[Probe],
    cfg: SimConfig,
    tolerance: float = 1e-6,
    sampler: Optional[SamplerConfig] = None,
) -> MonotoneReport:
    """
    Z_β (or Z^A_β when the model carries A) of the solved field at every probe.

    β(t) comes from beta_schedule(alpha_mono, sampled ‖G‖_Lip); a model without
    a positive alpha_mono is probed with β = 0. Torus models are probed on the
    flat pairing of the reconstructed value instead, with Monte Carlo errors.
    """
    report = MonotoneReport(name="zbeta", tolerance=tolerance)
    if model.is_torus:
        require_value_data(model)
        report.notes.append("torus: flat pairing of the reconstructed value")
        for probe in probes:
            if not 0.0 <= probe.t <= T:
                raise ValueError(f"probe time {probe.t} outside [0, {T}]")
            c = probe.coupling
            per_path = flat_value_pairing_paths(model, fld, probe.t, c.first_marginal, c.second_marginal,
                                                probe.theta, probe.theta_tilde, cfg)
            deficit, se = _mean_and_se(per_path)
            report.probes.append(ProbeResult(probe.index, probe.label, probe.seed, deficit, se, tolerance,
                                             probe.t, "zbeta", probe.inputs()))
        logger.info("Flat value probe on %s: %d probes, %s", model.name, len(probes), report.verdict)
        return report

    schedule: Optional[BetaSchedule] = None
    if model.alpha_mono:
        g_lip = estimate_lipschitz_constants(model, sampler=sampler, seed=cfg.seed)["G"]
        schedule = beta_schedule(model.alpha_mono, g_lip)
        report.notes.append(f"beta0={schedule.beta0:.6g}, kappa={schedule.kappa:.6g}")
    else:
        report.notes.append("alpha_mono absent or zero: beta = 0")

    for probe in probes:
        if not 0.0 <= probe.t <= T:
            raise ValueError(f"probe time {probe.t} outside [0, {T}]")
        beta = schedule(probe.t) if schedule is not None else 0.0
        deficit = l2_deficit(_field_at(model, fld, probe.t), probe.coupling, probe.theta, probe.theta_tilde,
                             beta=beta, A=model.A)
        inputs = dict(probe.inputs(), beta=beta)
        report.probes.append(ProbeResult(probe.index, probe.label, probe.seed, deficit, 0.0, tolerance,
                                         probe.t, "zbeta", inputs))
        logger.debug("Probe %d (%s) at t=%.3f: %.3e", probe.index, probe.label, probe.t, deficit)
    logger.info("Z_beta probe on %s: %d probes, min %.3e, %s", model.name, len(probes),
                report.min_deficit if probes else float("nan"), report.verdict)
    return report


@dataclass(frozen=True)
class InequalityResult:
    lhs: float
    rhs: float
    margin: float
    std_error: float

    @property
    def passed(self) -> bool:
        return self.margin >= -3.0 * self.std_error - 1e-12

    def to_dict(self) -> Dict[str, Any]:
        return {"lhs": self.lhs, "rhs": self.rhs, "margin": self.margin,
                "std_error": self.std_error, "passed": self.passed}


def monotonicity_inequality_check(
    model: ModelSpec,
    fld: Any,
    t: float,
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    theta: Any,
    theta_tilde: Any,
    cfg: SimConfig,
) -> InequalityResult:
    """
    lhs = [½A-term +] ⟨U(t,·,θ,μ) − U(t,·,θ̃,ν), μ − ν⟩,
    rhs = α_H · E ∫₀ᵗ ∫ |W(t−s,x,θ_s,μ_s) − W(t−s,x,θ̃_s,ν_s)|² (μ_s + ν_s)(dx) ds.

    μ and ν are paired index by index and driven by the same increments;
    the standard error is that of the per-path margin.

    Raises:
        MissingCoefficientError: model without alpha_H, U0 or H.
        ValueError: μ and ν of different sizes.
    """
    if model.alpha_H is None:
        raise MissingCoefficientError(f"Model {model.name} has no alpha_H")
    require_value_data(model)
    if mu.n != nu.n:
        raise ValueError(f"need equally sized clouds, got {mu.n} and {nu.n}")
    theta = np.asarray(theta, dtype=float).reshape(-1)
    theta_tilde = np.asarray(theta_tilde, dtype=float).reshape(-1)

    lhs = flat_value_pairing_paths(model, fld, t, mu, nu, theta, theta_tilde, cfg)
    if float(t) == 0.0:
        rhs = np.zeros_like(lhs)
    else:
        sim = cfg.with_horizon(t).replace(n_particles=mu.n)
        doubled = simulate_doubled(model, fld, theta, theta_tilde, Coupling(mu.points, nu.points, mu.period), sim)
        # the union mean weighs μ_s + ν_s by one half
        rhs = model.alpha_H * 2.0 * doubled_gradient_gap(doubled, fld)
    margin = lhs - rhs
    _, se = _mean_and_se(margin)
    result = InequalityResult(float(lhs.mean()), float(rhs.mean()), float(margin.mean()), se)
    logger.debug("Inequality on %s at t=%.3f: lhs %.3e rhs %.3e", model.name, t, result.lhs, result.rhs)
    return result
