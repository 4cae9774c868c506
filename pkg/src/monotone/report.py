# src/monotone/report.py
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from src.utils.io_utils import rows_to_csv_text

PROBE_COLUMNS = ("probe", "audit", "label", "seed", "deficit", "std_error", "threshold", "passed", "inputs")
SE_FACTOR = 3.0


@dataclass(frozen=True)
class ProbeResult:
    """Deficit of one probe; it fails below −(tolerance + 3·std_error)."""
    index: int
    label: str
    seed: List[int]
    deficit: float
    std_error: float = 0.0
    tolerance: float = 1e-6
    t: float = 0.0
    audit: str = ""
    inputs: Dict[str, Any] = field(default_factory=dict)

    @property
    def threshold(self) -> float:
        return self.tolerance + SE_FACTOR * self.std_error

    @property
    def passed(self) -> bool:
        return math.isfinite(self.deficit) and self.deficit >= -self.threshold

    def to_dict(self) -> Dict[str, Any]:
        return {
            "index": self.index,
            "audit": self.audit,
            "label": self.label,
            "seed": list(self.seed),
            "deficit": self.deficit,
            "std_error": self.std_error,
            "threshold": self.threshold,
            "passed": self.passed,
            "t": self.t,
        }

    def to_row(self) -> Dict[str, Any]:
        return {
            "probe": self.index,
            "audit": self.audit,
            "label": self.label,
            "seed": " ".join(str(s) for s in self.seed),
            "deficit": f"{self.deficit:.12e}",
            "std_error": f"{self.std_error:.12e}",
            "threshold": f"{self.threshold:.12e}",
            "passed": str(self.passed).lower(),
            "inputs": json.dumps(self.inputs, sort_keys=True),
        }


@dataclass
class MonotoneReport:
    name: str
    probes: List[ProbeResult] = field(default_factory=list)
    tolerance: float = 1e-6
    certificate: Optional[Dict[str, Any]] = None
    notes: List[str] = field(default_factory=list)

    # ------------------------------
    # Aggregates
    # ------------------------------
    @property
    def min_deficit(self) -> Optional[float]:
        if not self.probes:
            return None
        return min(p.deficit for p in self.probes)

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.probes)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def witnesses(self) -> List[ProbeResult]:
        """Failing probes, most negative first."""
        return sorted((p for p in self.probes if not p.passed), key=lambda p: (p.deficit, p.index))

    def audits(self) -> Dict[str, Dict[str, Any]]:
        """Per audit name: probe count, minimum deficit and verdict."""
        out: Dict[str, Dict[str, Any]] = {}
        for p in self.probes:
            key = p.audit or self.name
            row = out.setdefault(key, {"count": 0, "min_deficit": math.inf, "passed": True})
            row["count"] += 1
            row["min_deficit"] = min(row["min_deficit"], p.deficit)
            row["passed"] = row["passed"] and p.passed
        return out

    def extend(self, other: "MonotoneReport") -> None:
        self.probes.extend(other.probes)
        self.notes.extend(other.notes)

    # ------------------------------
    # Serialization
    # ------------------------------
    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "verdict": self.verdict,
            "min_deficit": self.min_deficit,
            "tolerance": self.tolerance,
            "n_probes": len(self.probes),
            "n_witnesses": len(self.witnesses()),
            "audits": self.audits(),
            "certificate": self.certificate,
            "notes": list(self.notes),
            "probes": [p.to_dict() for p in self.probes],
        }

    def probes_to_csv(self) -> str:
        return rows_to_csv_text((p.to_row() for p in self.probes), PROBE_COLUMNS)

    def witnesses_to_csv(self) -> str:
        """Failing probes with their seeds and inputs, for replay."""
        return rows_to_csv_text((p.to_row() for p in self.witnesses()), PROBE_COLUMNS)
