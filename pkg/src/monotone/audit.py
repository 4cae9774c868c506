# src/monotone/audit.py
from __future__ import annotations

import logging
from typing import Callable, Dict, List, Optional

import numpy as np

from src.models.model_spec import ModelSpec
from src.monotone.deficits import flat_deficit, joint_flat_deficit, quadratic_term
from src.monotone.probes import Probe, ProbeSpec, draw_probe
from src.monotone.report import MonotoneReport, ProbeResult
from src.utils.validators import ensure_int

logger = logging.getLogger(__name__)

LAMBDA_POINTS = 33
GROWTH_CAP = 100.0

AuditFn = Callable[[ModelSpec, Probe], float]


def _rows(values: np.ndarray, like: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=float).reshape(like.shape)


def _sq_mean(v: np.ndarray) -> float:
    return float(np.mean(np.sum(v * v, axis=1)))


# ---------------------------
# Single audits (deficit >= 0 when the hypothesis holds on the probe)
# ---------------------------
def growth_deficit(model: ModelSpec, probe: Probe) -> float:
    """GROWTH_CAP − max_i (|G| + |F|)(x_i, θ, μ, p_i) / (1 + |p_i|)."""
    x = probe.coupling.x
    mu = probe.coupling.first_marginal
    p = probe.rng(0).standard_normal(x.shape) * 10.0 ** probe.rng(1).uniform(-1.0, 2.0)
    g = _rows(model.G(x, probe.theta, mu, p), x)
    f = _rows(model.F(x, probe.theta, mu, p), x)
    ratio = (np.linalg.norm(g, axis=1) + np.linalg.norm(f, axis=1)) / (1.0 + np.linalg.norm(p, axis=1))
    return GROWTH_CAP - float(np.max(ratio))


def l2_w0_deficit(model: ModelSpec, probe: Probe) -> float:
    """[½A-term +] E[(W0(X) − W0(Y))·(X − Y)] − α E|W0(X) − W0(Y)|²."""
    c = probe.coupling
    gap = _rows(model.W0(c.x, probe.theta, c.first_marginal), c.x) - _rows(model.W0(c.y, probe.theta_tilde, c.second_marginal), c.y)
    cross = float(np.mean(np.sum(gap * c.displacement(), axis=1)))
    return quadratic_term(model.A, probe.theta, probe.theta_tilde) + cross - (model.alpha_mono or 0.0) * _sq_mean(gap)


def l2_fg_deficit(model: ModelSpec, probe: Probe, lambda_points: int = LAMBDA_POINTS) -> float:
    """
    E[(F(X,U) − F(Y,V))·(U − V) + (G(X,U) − G(Y,V))·(X − Y)]
    [+ (b(θ,μ,U) − b(θ̃,ν,V))·A(θ − θ̃)] − α min_λ E|G(X, U_λ) − G(Y, U_λ)|²,
    U_λ = λU + (1 − λ)V on a grid of `lambda_points` values of λ.
    """
    c = probe.coupling
    mu, nu = c.first_marginal, c.second_marginal
    th, tt = probe.theta, probe.theta_tilde
    rng = probe.rng(2)
    u = rng.standard_normal(c.x.shape)
    v = rng.standard_normal(c.y.shape)

    df = _rows(model.F(c.x, th, mu, u), c.x) - _rows(model.F(c.y, tt, nu, v), c.y)
    dg = _rows(model.G(c.x, th, mu, u), c.x) - _rows(model.G(c.y, tt, nu, v), c.y)
    value = float(np.mean(np.sum(df * (u - v) + dg * c.displacement(), axis=1)))
    if model.A is not None:
        db = np.asarray(model.b(th, mu, u), dtype=float).reshape(-1) - np.asarray(model.b(tt, nu, v), dtype=float).reshape(-1)
        value += float(db @ (model.A @ (th - tt)))

    alpha = model.alpha_mono or 0.0
    if alpha:
        best = np.inf
        for lam in np.linspace(0.0, 1.0, lambda_points):
            w = lam * u + (1.0 - lam) * v
            gap = _rows(model.G(c.x, th, mu, w), c.x) - _rows(model.G(c.y, tt, nu, w), c.y)
            best = min(best, _sq_mean(gap))
        value -= alpha * best
    return value


def flat_u0_deficit(model: ModelSpec, probe: Probe) -> float:
    c = probe.coupling
    return flat_deficit(model.U0, c.first_marginal, c.second_marginal, probe.theta)


def flat_f_deficit(model: ModelSpec, probe: Probe) -> float:
    c = probe.coupling
    return flat_deficit(model.f, c.first_marginal, c.second_marginal, probe.theta)


def joint_flat_audit_deficit(model: ModelSpec, probe: Probe) -> float:
    c = probe.coupling
    return joint_flat_deficit(model.f, lambda th, m: model.b(th, m, None), model.A,
                              c.first_marginal, c.second_marginal, probe.theta, probe.theta_tilde)


def applicable_audits(model: ModelSpec) -> Dict[str, AuditFn]:
    """Audits the model carries data for, in a fixed order."""
    audits: Dict[str, AuditFn] = {}
    if model.H is not None:
        audits["growth"] = growth_deficit
    if not model.is_torus and model.alpha_mono is not None:
        audits["l2_w0"] = l2_w0_deficit
        audits["l2_fg"] = l2_fg_deficit
    if model.U0 is not None:
        audits["flat_u0"] = flat_u0_deficit
    if model.f is not None:
        audits["flat_f"] = flat_f_deficit
        if model.A is not None:
            audits["joint_flat"] = joint_flat_audit_deficit
    return audits


def hypothesis_audit(
    model: ModelSpec,
    budget: int,
    spec: Optional[ProbeSpec] = None,
) -> MonotoneReport:
    """
    Sampled audit of the structural hypotheses the model has data for.

    `budget` probes are spread round-robin over the applicable audits, so
    budget = 1 evaluates a single probe. Probe i is drawn from (spec.seed, i).
    θ̃ differs from θ only when the model carries a penalization matrix A.
    """
    budget = ensure_int(budget, must_be_positive=True)
    spec = spec or ProbeSpec()
    audits = applicable_audits(model)
    report = MonotoneReport(name="hypotheses", tolerance=spec.tolerance)
    if not audits:
        report.notes.append(f"model {model.name} carries no auditable hypothesis")
        return report

    names: List[str] = list(audits)
    for i in range(budget):
        name = names[i % len(names)]
        probe = draw_probe(spec, i, model.dim_x, model.dim_theta, model.period,
                           with_theta_tilde=model.A is not None and name != "flat_u0" and name != "flat_f")
        deficit = float(audits[name](model, probe))
        report.probes.append(ProbeResult(i, probe.label, probe.seed, deficit, 0.0, spec.tolerance,
                                         0.0, name, probe.inputs()))
    for row_name, row in report.audits().items():
        if not row["passed"]:
            logger.warning("Audit %s failed on %s: min deficit %.3e", row_name, model.name, row["min_deficit"])
    logger.info("Hypothesis audit of %s: %d probes over %s, %s", model.name, budget, ", ".join(names), report.verdict)
    return report
