# src/models/lipschitz.py
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from src.measures.empirical import EmpiricalMeasure, pair_distances
from src.measures.transport import wasserstein_distance
from src.models.model_spec import ModelSpec
from src.models.sampling import SamplerConfig
from src.utils.validators import ensure_int

logger = logging.getLogger(__name__)

PERTURBATION_MODES = ("x", "theta", "measure", "w", "joint")
COEFFICIENTS = ("F", "G", "W0", "b")

B_FACTOR_NOTE = (
    "b's measure constant may grow with the field's own Lipschitz norm; "
    "the sampled ratio does not separate that factor"
)


@dataclass
class LipschitzTable:
    """Sampled lower bounds on per-coefficient Lipschitz constants."""
    estimates: Dict[str, float] = field(default_factory=dict)
    pairs: Dict[str, int] = field(default_factory=dict)
    degenerate: Dict[str, bool] = field(default_factory=dict)
    q: float = 2.0
    notes: str = B_FACTOR_NOTE

    def __getitem__(self, key: str) -> float:
        return self.estimates[key]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "estimates": dict(self.estimates),
            "pairs": dict(self.pairs),
            "degenerate": dict(self.degenerate),
            "q": self.q,
            "notes": self.notes,
        }


def _norm(v: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.asarray(v, dtype=float) ** 2)))


def _direction(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    n = _norm(v)
    return v / n if n > 0 else np.eye(dim)[0]


def estimate_lipschitz_constants(
    model: ModelSpec,
    sampler: Optional[SamplerConfig] = None,
    budget: int = 200,
    seed: int = 0,
    q: Optional[float] = None,
) -> LipschitzTable:
    """
    Max over sampled pairs of |Δ output| / (|Δx| + |Δθ| + W_q(μ, ν) + |Δw|).

    Pairs cycle through single-variable perturbations (μ moved by a pure
    translation) and a joint perturbation. For b the measure term is the
    paired cost of (id, f)_#μ against (id, g)_#ν, an upper bound of the
    coupling distance, so every ratio stays a lower bound.

    A sampler with zero spread yields no usable pair; the coefficient is then
    flagged degenerate with estimate 0.
    """
    budget = ensure_int(budget, minimum=2)
    sampler = sampler or SamplerConfig()
    q = float(q if q is not None else (1.0 if model.is_torus else 2.0))
    rng = np.random.default_rng(seed)
    d, n, period = model.dim_x, model.dim_theta, model.period

    best = {name: 0.0 for name in COEFFICIENTS}
    used = {name: 0 for name in COEFFICIENTS}

    for i in range(budget):
        mode = PERTURBATION_MODES[i % len(PERTURBATION_MODES)]
        if mode == "theta" and n == 0:
            mode = "joint"
        step = sampler.spread_max * sampler.x_scale * 10.0 ** rng.uniform(-2.0, 0.0)

        x = sampler.points(rng, 1, d, period)
        theta = sampler.theta(rng, n)
        mu = sampler.cloud(rng, d, period)
        w = sampler.values(rng, 1, d)
        f_vals = sampler.values(rng, mu.n, d)

        x2, theta2, w2, g_vals = x.copy(), theta.copy(), w.copy(), f_vals.copy()
        nu_pts = np.array(mu.points)
        if mode in ("x", "joint"):
            x2 = x + step * _direction(rng, d)
        if mode in ("theta", "joint") and n:
            theta2 = theta + step * _direction(rng, n)
        if mode == "measure":
            nu_pts = nu_pts + step * _direction(rng, d)
        elif mode == "joint":
            nu_pts = nu_pts + step * rng.standard_normal(nu_pts.shape) / np.sqrt(d)
        if mode in ("w", "joint"):
            w2 = w + step * _direction(rng, d)
            g_vals = f_vals + step * rng.standard_normal(f_vals.shape) / np.sqrt(d)
        nu = EmpiricalMeasure(nu_pts, period)
        if period is not None:
            x2 = np.mod(x2, period)

        dx = float(pair_distances(x, x2, period)[0])
        dth = _norm(theta - theta2)
        dmu = wasserstein_distance(q, mu, nu)
        dw = _norm(w - w2)
        paired = pair_distances(mu.points, nu.points, period) + np.sqrt(np.sum((f_vals - g_vals) ** 2, axis=1))
        dfield = float(np.mean(paired ** q) ** (1.0 / q))

        ratios = {
            "F": (_norm(model.F(x, theta, mu, w) - model.F(x2, theta2, nu, w2)), dx + dth + dmu + dw),
            "G": (_norm(model.G(x, theta, mu, w) - model.G(x2, theta2, nu, w2)), dx + dth + dmu + dw),
            "W0": (_norm(model.W0(x, theta, mu) - model.W0(x2, theta2, nu)), dx + dth + dmu),
            "b": (_norm(model.b(theta, mu, f_vals) - model.b(theta2, nu, g_vals)), dth + dfield),
        }
        for name, (num, den) in ratios.items():
            if den <= 0.0:
                continue
            used[name] += 1
            best[name] = max(best[name], num / den)

    table = LipschitzTable(q=q)
    for name in COEFFICIENTS:
        table.estimates[name] = best[name]
        table.pairs[name] = used[name]
        table.degenerate[name] = used[name] == 0
        if used[name] == 0:
            logger.warning("Degenerate sampler: no informative pair for %s in model %s", name, model.name)
    return table
