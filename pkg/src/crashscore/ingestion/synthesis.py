"""Safe-sample synthesis by seeded per-dimension flips of crash records."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ConfigError
from ..types import FeatureSchema, Label, LabeledDataset
from .codes import CodeMap
from .features import DEFAULT_FEATURE_CONFIG, FeatureConfig, engineer_matrix, is_night_hour
from .records import CrashRecord, IngestionReport

PROVENANCE_CRASH = "real-crash"
PROVENANCE_SAFE = "synthetic-safe"
SAFE_SUFFIX = "-S"


@dataclass(frozen=True)
class FlipRates:
    lighting: float = 0.80
    night: float = 0.70
    weather: float = 0.90
    road: float = 0.85

    def __post_init__(self):
        for name in ("lighting", "night", "weather", "road"):
            r = getattr(self, name)
            if not 0.0 <= r <= 1.0:
                raise ConfigError(f"flip rate {name}={r} outside [0, 1]")


@dataclass(frozen=True)
class SafeTargets:
    # inclusive daytime hour range a night record is moved into
    day_hours: tuple[int, int] = (7, 18)


def synthesize_safe_samples(
    crashes: Sequence[CrashRecord],
    rates: FlipRates = FlipRates(),
    seed: int = 0,
    codes: CodeMap | None = None,
    targets: SafeTargets = SafeTargets(),
    cfg: FeatureConfig = DEFAULT_FEATURE_CONFIG,
) -> list[CrashRecord]:
    """One safe clone per crash; each risky dimension flips with its own rate.

    Row ``i`` draws from a generator seeded by ``(seed, i)`` and always makes
    the same draws, so results do not depend on processing order.
    """
    codes = codes or CodeMap.default()
    poor_light = codes.codeset("LGT_COND", "poor")
    adverse_wx = codes.codeset("WEATHER", "adverse")
    adverse_road = codes.codeset("VSURCOND", "adverse")
    lo, hi = targets.day_hours

    out = []
    for i, rec in enumerate(crashes):
        rng = np.random.default_rng([seed, i])
        u = rng.random(4)
        day_hour = float(rng.integers(lo, hi + 1))
        upd: dict[str, float] = {}
        if rec.raw.get("LGT_COND") in poor_light and u[0] < rates.lighting:
            upd["LGT_COND"] = float(codes.safe("LGT_COND"))
        hour = rec.raw.get("HOUR")
        if hour is not None and bool(is_night_hour(hour, cfg)) and u[1] < rates.night:
            upd["HOUR"] = day_hour
        if rec.raw.get("WEATHER") in adverse_wx and u[2] < rates.weather:
            upd["WEATHER"] = float(codes.safe("WEATHER"))
        if rec.raw.get("VSURCOND") in adverse_road and u[3] < rates.road:
            upd["VSURCOND"] = float(codes.safe("VSURCOND"))
        out.append(rec.with_fields(SAFE_SUFFIX, label=Label.SAFE, **upd))
    return out


def build_balanced_dataset(
    crashes: Sequence[CrashRecord],
    schema: FeatureSchema,
    rates: FlipRates = FlipRates(),
    seed: int = 0,
    codes: CodeMap | None = None,
    cfg: FeatureConfig = DEFAULT_FEATURE_CONFIG,
    report: IngestionReport | None = None,
) -> LabeledDataset:
    """Crash rows followed by their safe clones, 1:1; each pair shares a group id."""
    safe = synthesize_safe_samples(crashes, rates, seed, codes, cfg=cfg)
    X = engineer_matrix(list(crashes) + safe, schema, codes, cfg, report)
    n = len(crashes)
    y = np.r_[np.full(n, int(Label.CRASH)), np.full(n, int(Label.SAFE))]
    prov = np.array([PROVENANCE_CRASH] * n + [PROVENANCE_SAFE] * n, dtype=object)
    pair = np.r_[np.arange(n), np.arange(n)]
    return LabeledDataset(X, y, schema, prov, pair)
