"""Share of crash records showing each primary contributing factor."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from ..ingestion.codes import CodeMap
from ..ingestion.features import DEFAULT_FEATURE_CONFIG, FeatureConfig, is_night_hour, is_rush_hour
from ..ingestion.records import CrashRecord

PREVALENCE_FACTORS = ("rush_hour", "poor_lighting", "weekend", "adverse_weather", "night", "vru")


@dataclass(frozen=True)
class PrevalenceReport:
    total: int
    counts: dict[str, int]
    multi_factor_count: int

    def percent(self, factor: str) -> float:
        return 100.0 * self.counts[factor] / self.total if self.total else 0.0

    @property
    def multi_factor_share(self) -> float | None:
        return self.multi_factor_count / self.total if self.total else None

    def to_dict(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "factors": [{"factor": f, "count": self.counts[f], "percent": self.percent(f)} for f in PREVALENCE_FACTORS],
            "multi_factor_count": self.multi_factor_count,
            "multi_factor_share": self.multi_factor_share,
        }


def factor_flags(crashes: Sequence[CrashRecord], codes: CodeMap | None = None, cfg: FeatureConfig = DEFAULT_FEATURE_CONFIG) -> np.ndarray:
    """(records, 6) boolean matrix in ``PREVALENCE_FACTORS`` order, read from raw fields."""
    codes = codes or CodeMap.default()
    if not crashes:
        return np.zeros((0, len(PREVALENCE_FACTORS)), dtype=bool)

    def col(name: str) -> np.ndarray:
        return np.array([r.raw.get(name, np.nan) for r in crashes], dtype=np.float64)

    def member(name: str, setname: str) -> np.ndarray:
        return np.isin(col(name), np.fromiter(codes.codeset(name, setname), dtype=np.float64))

    hour = col("HOUR")
    known = ~np.isnan(hour)
    vru = np.nan_to_num(col("pedestrian_count")) + np.nan_to_num(col("cyclist_count"))
    return np.column_stack(
        [
            known & is_rush_hour(np.nan_to_num(hour, nan=-1), cfg),
            member("LGT_COND", "poor"),
            member("DAY_WEEK", "weekend"),
            member("WEATHER", "adverse"),
            known & is_night_hour(np.nan_to_num(hour, nan=12), cfg),
            vru >= 1,
        ]
    )


def factor_prevalence(crashes: Sequence[CrashRecord], codes: CodeMap | None = None, cfg: FeatureConfig = DEFAULT_FEATURE_CONFIG) -> PrevalenceReport:
    flags = factor_flags(crashes, codes, cfg)
    counts = {f: int(flags[:, j].sum()) for j, f in enumerate(PREVALENCE_FACTORS)}
    multi = int((flags.sum(axis=1) >= 2).sum())
    return PrevalenceReport(len(crashes), counts, multi)
