# src/noisetransform/checks.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.lipsolve.field import FieldApprox
from src.lipsolve.psi import LipsolveConfig
from src.lipsolve.solver import LipschitzProbe, PicardSettings, fixed_point_solve
from src.measures.empirical import Coupling, EmpiricalMeasure, axis_gaps
from src.measures.transport import pushforward_shift
from src.models.model_spec import ModelSpec
from src.monotone.deficits import flat_deficit, l2_deficit
from src.noisetransform.transform import TransformedModel, shifted_function, split_theta, transform_model

logger = logging.getLogger(__name__)


# ---------------------------
# Shift invariance of the derived field
# ---------------------------
def shift_invariance_residual(field_derived: Any, t: float, y: Any, theta: Any, mu: EmpiricalMeasure, n_base: int = 0) -> float:
    """
    max |W(t, y, (θ_b, s), m) − W(t, y + s, (θ_b, 0), (id + s)_# m)| over the rows of y.

    θ = (θ_b, s) with the shift block last, as built by transform_model.
    """
    y = np.asarray(y, dtype=float).reshape(-1, mu.dim)
    theta = np.asarray(theta, dtype=float).reshape(-1)
    base, shift = split_theta(theta, n_base)
    origin = np.concatenate([base, np.zeros_like(shift)])
    here = np.asarray(field_derived.evaluate(t, y, theta, mu), dtype=float)
    there = np.asarray(field_derived.evaluate(t, y + shift, origin, pushforward_shift(mu, shift)), dtype=float)
    return float(np.max(np.abs(here - there)))


# ---------------------------
# Two routes to the common-noise field
# ---------------------------
@dataclass
class EquivalenceResult:
    """Gap between the extra-variable solve and the common-noise solve on shared scenes."""
    residual: float
    relative: float
    scale: float
    std_errors: Dict[str, float] = field(default_factory=dict)
    statuses: Dict[str, str] = field(default_factory=dict)
    shift_residual: Optional[float] = None
    rows: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def blew_up(self) -> bool:
        return "blow_up" in self.statuses.values()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "residual": self.residual,
            "relative": self.relative,
            "scale": self.scale,
            "std_errors": dict(self.std_errors),
            "statuses": dict(self.statuses),
            "shift_residual": self.shift_residual,
        }


def _fit_std_error(fld: FieldApprox, cfg: LipsolveConfig) -> float:
    rows = cfg.sim.n_paths * cfg.sim.n_particles
    return float(np.max(fld.residuals)) / math.sqrt(rows)


def common_noise_equivalence_check(
    base: ModelSpec,
    T: float,
    cfg: LipsolveConfig,
    picard: Optional[PicardSettings] = None,
    probe: Optional[LipschitzProbe] = None,
    concatenate_theta: bool = True,
    shift_scale: float = 0.5,
) -> EquivalenceResult:
    """
    Solve the derived model of transform_model(base) and, independently, the
    base model with its common noise simulated; compare W_c(t, x, θ, m) with
    W_derived(t, x, (θ, 0), m) at the audit scenes of the common-noise solve
    and every grid time.

    The shift residual of the derived field is measured on the same scenes
    with shifts drawn at scale `shift_scale`. A blow-up of either solve is
    reported in `statuses` with infinite residuals.
    """
    transformed: TransformedModel = transform_model(base, concatenate_theta=concatenate_theta)
    derived_field, derived_report = fixed_point_solve(transformed.derived, T, cfg, picard, probe)
    common_field, common_report = fixed_point_solve(base, T, cfg, picard, probe)
    statuses = {"derived": derived_report.status, "common_noise": common_report.status}
    std_errors = {"derived": _fit_std_error(derived_field, cfg), "common_noise": _fit_std_error(common_field, cfg)}
    if derived_report.blew_up or common_report.blew_up:
        logger.warning("Equivalence check on %s: a solve blew up (%s)", base.name, statuses)
        return EquivalenceResult(math.inf, math.inf, 0.0, std_errors, statuses)

    rows: List[Dict[str, Any]] = []
    residual, scale = 0.0, 0.0
    for t in common_field.times:
        at_t = 0.0
        for x, theta, mu in common_report.audit:
            w_c = common_field.evaluate(float(t), x, theta, mu)
            w_d = derived_field.evaluate(float(t), x, transformed.derived_theta(theta), mu)
            at_t = max(at_t, float(np.max(np.abs(w_c - w_d))))
            scale = max(scale, float(np.max(np.abs(w_c))))
        residual = max(residual, at_t)
        rows.append({"t": float(t), "residual": at_t})

    rng = np.random.default_rng([cfg.sim.seed, 0x5F1F])
    shift_residual = 0.0
    for x, theta, mu in common_report.audit:
        shift = shift_scale * rng.standard_normal(base.dim_x)
        shift_residual = max(shift_residual, shift_invariance_residual(
            derived_field, T, x, transformed.derived_theta(theta, shift), mu, base.dim_theta))

    relative = residual / scale if scale > 0 else residual
    logger.info("Equivalence on %s: residual %.3e (relative %.3e), shift residual %.3e",
                base.name, residual, relative, shift_residual)
    return EquivalenceResult(residual, relative, scale, std_errors, statuses, shift_residual, rows)


# ---------------------------
# Exact identities on particles
# ---------------------------
Sample = Tuple[EmpiricalMeasure, EmpiricalMeasure, Any, Any]


def monotonicity_preservation_check(g: Callable, samples: Iterable[Sample]) -> float:
    """
    max over (μ, ν, θ, s) of
    |flat_deficit(g̃, μ, ν, (θ, s)) − flat_deficit(g, (id+s)_#μ, (id+s)_#ν, θ)|,
    g̃ the shifted version of g built as in transform_model.
    """
    worst = 0.0
    for mu, nu, theta, shift in samples:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        shift = np.asarray(shift, dtype=float).reshape(-1)
        g_tilde = shifted_function(g, theta.size)
        derived = flat_deficit(g_tilde, mu, nu, np.concatenate([theta, shift]))
        pushed = flat_deficit(g, pushforward_shift(mu, shift), pushforward_shift(nu, shift), theta)
        worst = max(worst, abs(derived - pushed))
    return worst


def l2_preservation_check(W: Callable, samples: Iterable[Tuple[Coupling, Any, Any]]) -> float:
    """The same identity for l2_deficit on couplings (x_i, y_i) ↦ (x_i + s, y_i + s)."""
    worst = 0.0
    for coupling, theta, shift in samples:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        shift = np.asarray(shift, dtype=float).reshape(-1)
        W_tilde = shifted_function(W, theta.size)
        full = np.concatenate([theta, shift])
        derived = l2_deficit(W_tilde, coupling, full, full)
        moved = Coupling(coupling.x + shift, coupling.y + shift, coupling.period)
        pushed = l2_deficit(W, moved, theta, theta)
        worst = max(worst, abs(derived - pushed))
    return worst


def average_distance(mu: EmpiricalMeasure) -> float:
    """U(m) = mean over all ordered pairs (i, j) of |y_i − y_j|."""
    pts = mu.points
    gaps = axis_gaps(pts[:, None, :], pts[None, :, :], mu.period)
    return float(np.mean(np.sqrt(np.sum(gaps ** 2, axis=2))))


def average_distance_invariance(mu: EmpiricalMeasure, thetas: Sequence[Any]) -> float:
    """max over θ of |U((id + θ)_# m) − U(m)|; zero up to rounding."""
    reference = average_distance(mu)
    worst = 0.0
    for theta in thetas:
        worst = max(worst, abs(average_distance(pushforward_shift(mu, theta)) - reference))
    return worst
