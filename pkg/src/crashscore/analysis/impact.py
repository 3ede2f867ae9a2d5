"""Threshold-alert impact simulation over grid assessments."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from ..errors import AnalysisError
from ..types import SafetyAssessment

DEFAULT_THRESHOLDS = (20.0, 40.0, 50.0, 60.0, 70.0, 80.0)


@dataclass(frozen=True)
class ImpactRow:
    threshold: float
    flagged_pct: float
    reduction_pct: float

    def to_dict(self) -> dict[str, Any]:
        return {"threshold": self.threshold, "flagged_pct": self.flagged_pct, "reduction_pct": self.reduction_pct}


def simulate_impact(
    scores: Sequence[SafetyAssessment] | np.ndarray,
    crash_probs: np.ndarray,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    compliance: float = 0.5,
) -> list[ImpactRow]:
    """Cells at or below a threshold are flagged; complying drivers avoid their crash mass.

    reduction % = compliance * (p_crash mass of flagged cells / total mass) * 100
    """
    if not 0.0 <= compliance <= 1.0:
        raise AnalysisError(f"compliance must be in [0, 1], got {compliance}")
    if len(scores) and isinstance(scores[0], SafetyAssessment):
        s = np.array([a.calibrated_score for a in scores], dtype=np.float64)
    else:
        s = np.asarray(scores, dtype=np.float64)
    p = np.asarray(crash_probs, dtype=np.float64)
    if s.shape != p.shape:
        raise AnalysisError(f"{s.size} scores but {p.size} crash probabilities")
    total = float(p.sum())
    rows = []
    for t in thresholds:
        flagged = s <= t
        share = float(p[flagged].sum()) / total if total > 0 else 0.0
        pct = 100.0 * float(flagged.mean()) if s.size else 0.0
        rows.append(ImpactRow(float(t), pct, compliance * share * 100.0))
    return rows
