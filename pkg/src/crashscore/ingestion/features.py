"""Feature engineering: raw CRSS-style fields to schema-ordered vectors.

Every derived feature is a function of raw schema features only, so the same
rules re-derive a context after any raw field is edited (grid rendering,
recommendations, kinematic contexts).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import SchemaError
from ..types import DrivingContext, FeatureSchema
from .codes import CodeMap
from .records import CrashRecord, IngestionReport


@dataclass(frozen=True)
class FeatureConfig:
    # [start, end) local-hour windows
    rush_hours: tuple[tuple[int, int], ...] = ((7, 9), (16, 19))
    night_start: int = 22
    night_end: int = 5
    speeding_over: float = 5.0


DEFAULT_FEATURE_CONFIG = FeatureConfig()


def is_night_hour(hour, cfg: FeatureConfig = DEFAULT_FEATURE_CONFIG):
    hour = np.asarray(hour)
    return (hour >= cfg.night_start) | (hour < cfg.night_end)


def is_rush_hour(hour, cfg: FeatureConfig = DEFAULT_FEATURE_CONFIG):
    hour = np.asarray(hour)
    out = np.zeros(hour.shape, dtype=bool)
    for lo, hi in cfg.rush_hours:
        out |= (hour >= lo) & (hour < hi)
    return out


def _isin(values, codes) -> np.ndarray:
    return np.isin(values, np.fromiter(codes, dtype=np.float64))


class _Cols:
    """Column accessor that names the missing raw input on failure."""

    def __init__(self, X: np.ndarray, schema: FeatureSchema, rule: str):
        self.X, self.schema, self.rule = X, schema, rule

    def __call__(self, name: str) -> np.ndarray:
        if name not in self.schema:
            raise SchemaError(f"derivation {self.rule!r} needs raw feature {name!r}, absent from schema")
        return self.X[:, self.schema.index(name)]


Rule = Callable[[_Cols, CodeMap, FeatureConfig], np.ndarray]


def _poor_lighting(c, codes, cfg):
    return _isin(c("LGT_COND"), codes.codeset("LGT_COND", "poor"))


def _adverse_weather(c, codes, cfg):
    return _isin(c("WEATHER"), codes.codeset("WEATHER", "adverse"))


def _adverse_surface(c, codes, cfg):
    return _isin(c("VSURCOND"), codes.codeset("VSURCOND", "adverse"))


def _is_weekend(c, codes, cfg):
    return _isin(c("DAY_WEEK"), codes.codeset("DAY_WEEK", "weekend"))


def _is_night(c, codes, cfg):
    return is_night_hour(c("HOUR"), cfg)


def _recode_unreported(column: str):
    def rule(c, codes, cfg):
        v = c(column).copy()
        v[_isin(v, codes.codeset(column, "unreported"))] = codes.safe(column)
        return v

    return rule


def _speed_over(c, codes, cfg):
    return np.maximum(c("TRAV_SP") - c("VSPD_LIM"), 0.0)


def _adverse_conditions(c, codes, cfg):
    flags = (
        _poor_lighting(c, codes, cfg).astype(int)
        + _adverse_weather(c, codes, cfg)
        + _adverse_surface(c, codes, cfg)
        + _is_night(c, codes, cfg)
    )
    return flags >= 2


RULES: dict[str, Rule] = {
    "is_rush_hour": lambda c, codes, cfg: is_rush_hour(c("HOUR"), cfg),
    "is_weekend": _is_weekend,
    "is_night": _is_night,
    "hour_sin": lambda c, codes, cfg: np.sin(2.0 * np.pi * c("HOUR") / 24.0),
    "hour_cos": lambda c, codes, cfg: np.cos(2.0 * np.pi * c("HOUR") / 24.0),
    "adverse_weather": _adverse_weather,
    "poor_lighting": _poor_lighting,
    "lgtcon_im": _recode_unreported("LGT_COND"),
    "weathr_im": _recode_unreported("WEATHER"),
    "adverse_surface": _adverse_surface,
    "total_vru": lambda c, codes, cfg: c("pedestrian_count") + c("cyclist_count"),
    "fatal_vru": lambda c, codes, cfg: c("max_vru_injury") >= 4,
    "night_and_dark": lambda c, codes, cfg: _is_night(c, codes, cfg) & _poor_lighting(c, codes, cfg),
    "weekend_night": lambda c, codes, cfg: _is_weekend(c, codes, cfg) & _is_night(c, codes, cfg),
    "adverse_conditions": _adverse_conditions,
    "veh_age": lambda c, codes, cfg: np.maximum(c("YEAR") - c("MOD_YEAR"), 0.0),
    "speed_over": _speed_over,
    "speeding": lambda c, codes, cfg: _speed_over(c, codes, cfg) >= cfg.speeding_over,
}


def derive(
    X: np.ndarray,
    schema: FeatureSchema,
    codes: CodeMap | None = None,
    cfg: FeatureConfig = DEFAULT_FEATURE_CONFIG,
) -> np.ndarray:
    """Recompute every derived column of ``X`` in place from its raw columns."""
    codes = codes or CodeMap.default()
    X2 = X if X.ndim == 2 else X.reshape(1, -1)
    for i, spec in enumerate(schema.features):
        if spec.is_raw:
            continue
        rule = RULES.get(spec.derivation)
        if rule is None:
            raise SchemaError(f"feature {spec.name!r} uses unknown derivation {spec.derivation!r}")
        X2[:, i] = rule(_Cols(X2, schema, spec.derivation), codes, cfg)
    return X


def raw_matrix(
    records: Sequence[CrashRecord],
    schema: FeatureSchema,
    codes: CodeMap | None = None,
    report: IngestionReport | None = None,
) -> np.ndarray:
    """Lay raw record fields out in schema order; derived columns left at defaults."""
    codes = codes or CodeMap.default()
    n = len(records)
    X = np.tile(schema.defaults, (n, 1))
    for j, spec in enumerate(schema.features):
        if not spec.is_raw:
            continue
        col = np.array([r.raw.get(spec.name, np.nan) for r in records], dtype=np.float64)
        absent = np.isnan(col)
        if absent.any():
            col[absent] = spec.default
            if report is not None and spec.name not in report.defaulted_columns:
                report.defaulted_columns.append(spec.name)
        if spec.kind == "categorical" and codes.has(spec.name):
            known = np.fromiter(codes.known(spec.name), dtype=np.float64)
            bad = ~np.isin(col, known)
            if bad.any():
                col[bad] = codes.unknown(spec.name)
                if report is not None:
                    report.unknown_codes[spec.name] += int(bad.sum())
        X[:, j] = col
    return X


def engineer_matrix(
    records: Sequence[CrashRecord],
    schema: FeatureSchema,
    codes: CodeMap | None = None,
    cfg: FeatureConfig = DEFAULT_FEATURE_CONFIG,
    report: IngestionReport | None = None,
) -> np.ndarray:
    X = raw_matrix(records, schema, codes, report)
    return derive(X, schema, codes, cfg)


def engineer_features(
    record: CrashRecord,
    schema: FeatureSchema,
    codes: CodeMap | None = None,
    cfg: FeatureConfig = DEFAULT_FEATURE_CONFIG,
    report: IngestionReport | None = None,
) -> DrivingContext:
    X = engineer_matrix([record], schema, codes, cfg, report)
    return DrivingContext(X[0], schema.schema_id)


def rederive_context(
    context: DrivingContext,
    schema: FeatureSchema,
    codes: CodeMap | None = None,
    cfg: FeatureConfig = DEFAULT_FEATURE_CONFIG,
    **raw_updates: float,
) -> DrivingContext:
    """Edit raw fields of a context and recompute all derived features."""
    vals = context.values.copy()
    for name, v in raw_updates.items():
        idx = schema.index(name)
        if not schema.features[idx].is_raw:
            raise SchemaError(f"{name!r} is derived; edit its raw inputs instead")
        vals[idx] = v
    derive(vals, schema, codes, cfg)
    return DrivingContext(vals, context.schema_id)
