# src/monotone/certificates.py
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

import numpy as np

from src.utils.validators import ensure_nonnegative


@dataclass(frozen=True)
class BetaSchedule:
    """β(t) = β₀ e^{−κt}."""
    beta0: float
    kappa: float

    def __call__(self, t: float) -> float:
        return self.beta0 * math.exp(-self.kappa * float(t))

    def to_dict(self) -> Dict[str, float]:
        return {"beta0": self.beta0, "kappa": self.kappa}


def beta_schedule(alpha: float, g_lip: float) -> BetaSchedule:
    """
    Schedule under which Z_β stays nonnegative: β₀ = alpha, κ = 1 + 4·g_lip.

    Raises:
        ValueError: alpha <= 0 or g_lip < 0.
    """
    alpha = float(alpha)
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    g_lip = ensure_nonnegative(g_lip, "g_lip")
    return BetaSchedule(beta0=alpha, kappa=1.0 + 4.0 * g_lip)


@dataclass(frozen=True)
class CertificateResult:
    feasible: bool
    interval: Tuple[float, float]
    midpoint: float
    blocks_positive: bool
    block_eigenvalues: Tuple[Tuple[float, ...], ...] = ()
    reason: str = ""
    inputs: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "feasible": self.feasible,
            "interval": list(self.interval),
            "midpoint": self.midpoint,
            "blocks_positive": self.blocks_positive,
            "block_eigenvalues": [list(e) for e in self.block_eigenvalues],
            "reason": self.reason,
            "inputs": dict(self.inputs),
        }


def certificate_blocks(alpha_G: float, alpha_F: float, alpha_b: float, dthetaG_bound: float, b_lip: float, a: float) -> Tuple[np.ndarray, np.ndarray]:
    """The two 2×2 blocks whose positive definiteness is sufficient for A = aI."""
    first = np.array([[alpha_G, -0.5 * dthetaG_bound], [-0.5 * dthetaG_bound, 0.5 * a * alpha_b]])
    second = np.array([[alpha_F, -0.5 * a * b_lip], [-0.5 * a * b_lip, 0.5 * a * alpha_b]])
    return first, second


def joint_certificate_search(alpha_G: float, alpha_F: float, alpha_b: float, dthetaG_bound: float, b_lip: float) -> CertificateResult:
    """
    Search a penalization A = aI for the joint (F, G, Ab) hypothesis.

    Feasible iff 4 α_G α_F α_b² > ‖D_θG‖² ‖b‖²; then any a in
    (‖D_θG‖² / (2 α_G α_b), 2 α_F α_b / ‖b‖²) works. The midpoint is checked by
    eigenvalues of the two sufficient 2×2 blocks.
    """
    inputs = {
        "alpha_G": ensure_nonnegative(alpha_G, "alpha_G"),
        "alpha_F": ensure_nonnegative(alpha_F, "alpha_F"),
        "alpha_b": ensure_nonnegative(alpha_b, "alpha_b"),
        "dthetaG_bound": ensure_nonnegative(dthetaG_bound, "dthetaG_bound"),
        "b_lip": ensure_nonnegative(b_lip, "b_lip"),
    }
    aG, aF, ab, g, bl = (inputs[k] for k in ("alpha_G", "alpha_F", "alpha_b", "dthetaG_bound", "b_lip"))

    feasible = 4.0 * aG * aF * ab * ab > g * g * bl * bl
    denom_lo = 2.0 * aG * ab
    lo = (g * g) / denom_lo if denom_lo > 0 else (0.0 if g == 0 else math.inf)
    hi = (2.0 * aF * ab) / (bl * bl) if bl > 0 else math.inf

    if not feasible:
        return CertificateResult(False, (lo, hi), math.nan, False, reason="4·α_G·α_F·α_b² <= ‖D_θG‖²·‖b‖²", inputs=inputs)

    mid = 0.5 * (lo + hi) if math.isfinite(hi) else lo + 1.0
    blocks = certificate_blocks(aG, aF, ab, g, bl, mid)
    eigs = tuple(tuple(float(v) for v in np.linalg.eigvalsh(B)) for B in blocks)
    positive = all(min(e) > 0 for e in eigs)
    return CertificateResult(True, (lo, hi), mid, positive, eigs, "", inputs)
