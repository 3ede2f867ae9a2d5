"""Factorial scenario grid, score distribution and the expected-level rule table."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import stats

from ..errors import AnalysisError, SchemaError
from ..forest import Forest
from ..ingestion.codes import CodeMap
from ..ingestion.features import DEFAULT_FEATURE_CONFIG, FeatureConfig, derive
from ..scoring import DEFAULT_BANDS, CalibrationTable, RiskBands, assessment_arrays
from ..types import DrivingContext, FeatureSchema, RiskLevel


@dataclass(frozen=True)
class GridLevel:
    name: str
    fields: Mapping[str, float]  # raw-field values this level sets

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "fields": dict(sorted(self.fields.items()))}


@dataclass(frozen=True)
class GridFactor:
    name: str
    levels: tuple[GridLevel, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "levels": [lv.to_dict() for lv in self.levels]}


def _factor(name: str, levels: Sequence[tuple[str, Mapping[str, float]]]) -> GridFactor:
    return GridFactor(name, tuple(GridLevel(n, dict(f)) for n, f in levels))


SPEED_LIMIT = 35.0

DEFAULT_FACTORS: tuple[GridFactor, ...] = (
    _factor("time_of_day", [("day", {"HOUR": 12}), ("dusk", {"HOUR": 19}), ("night", {"HOUR": 2})]),
    _factor("weather", [("clear", {"WEATHER": 1}), ("rain", {"WEATHER": 2}), ("snow", {"WEATHER": 4})]),
    _factor(
        "lighting",
        [("daylight", {"LGT_COND": 1}), ("dark_lit", {"LGT_COND": 3}), ("dark_unlit", {"LGT_COND": 2}), ("dawn_dusk", {"LGT_COND": 5})],
    ),
    _factor(
        "speed",
        [
            ("low", {"TRAV_SP": SPEED_LIMIT, "VSPD_LIM": SPEED_LIMIT}),
            ("moderate_high", {"TRAV_SP": SPEED_LIMIT + 7, "VSPD_LIM": SPEED_LIMIT}),
            ("high", {"TRAV_SP": SPEED_LIMIT + 15, "VSPD_LIM": SPEED_LIMIT}),
            ("very_high", {"TRAV_SP": SPEED_LIMIT + 25, "VSPD_LIM": SPEED_LIMIT}),
        ],
    ),
    _factor("road_condition", [("dry", {"VSURCOND": 1}), ("wet", {"VSURCOND": 2}), ("ice", {"VSURCOND": 4})]),
    _factor("vru_presence", [("absent", {"pedestrian_count": 0}), ("present", {"pedestrian_count": 1})]),
)


@dataclass(frozen=True)
class ScenarioGridSpec:
    factors: tuple[GridFactor, ...] = DEFAULT_FACTORS
    # raw fields applied to every cell before the factor levels
    base: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        names = [f.name for f in self.factors]
        if len(set(names)) != len(names):
            raise AnalysisError("grid factor names must be unique")
        for f in self.factors:
            if not f.levels:
                raise AnalysisError(f"grid factor {f.name!r} has no levels")

    @property
    def size(self) -> int:
        return math.prod(len(f.levels) for f in self.factors)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(f.levels) for f in self.factors)

    def to_dict(self) -> dict[str, Any]:
        return {"factors": [f.to_dict() for f in self.factors], "base": dict(sorted(self.base.items()))}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ScenarioGridSpec":
        try:
            factors = tuple(
                GridFactor(f["name"], tuple(GridLevel(lv["name"], {k: float(v) for k, v in lv["fields"].items()}) for lv in f["levels"]))
                for f in doc["factors"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise AnalysisError(f"malformed grid spec: {exc}") from exc
        return cls(factors, {k: float(v) for k, v in doc.get("base", {}).items()})


@dataclass(frozen=True, eq=False)
class ScenarioGrid:
    """Rendered grid: one context per cell, row-major over the spec's factors."""

    spec: ScenarioGridSpec
    X: np.ndarray
    levels: np.ndarray  # (cells, factors) level index per factor
    schema_id: str

    def __len__(self) -> int:
        return self.X.shape[0]

    def contexts(self) -> list[DrivingContext]:
        return [DrivingContext(row, self.schema_id) for row in self.X]

    def cell_names(self, i: int) -> tuple[str, ...]:
        return tuple(f.levels[j].name for f, j in zip(self.spec.factors, self.levels[i]))


def _check_level(schema: FeatureSchema, codes: CodeMap, factor: str, level: GridLevel) -> None:
    for name, value in level.fields.items():
        if name not in schema:
            raise AnalysisError(f"grid level {factor}={level.name}: field {name!r} not in schema {schema.schema_id!r}")
        spec = schema.features[schema.index(name)]
        if not spec.is_raw:
            raise AnalysisError(f"grid level {factor}={level.name}: {name!r} is derived, set its raw inputs")
        if spec.kind == "categorical" and codes.has(name) and int(value) not in codes.known(name):
            raise AnalysisError(f"grid level {factor}={level.name}: code {value!r} unknown for {name}")


def build_scenario_grid(
    spec: ScenarioGridSpec = ScenarioGridSpec(),
    schema: FeatureSchema | None = None,
    codes: CodeMap | None = None,
    cfg: FeatureConfig = DEFAULT_FEATURE_CONFIG,
) -> ScenarioGrid:
    schema = schema or FeatureSchema.default()
    codes = codes or CodeMap.default()
    base_level = GridLevel("base", spec.base)
    _check_level(schema, codes, "base", base_level)
    for f in spec.factors:
        for lv in f.levels:
            _check_level(schema, codes, f.name, lv)

    idx = np.array(list(itertools.product(*(range(n) for n in spec.shape))), dtype=np.int64).reshape(-1, len(spec.factors))
    X = np.tile(schema.defaults, (idx.shape[0], 1))
    for name, v in spec.base.items():
        X[:, schema.index(name)] = v
    for j, f in enumerate(spec.factors):
        for k, lv in enumerate(f.levels):
            rows = idx[:, j] == k
            for name, v in lv.fields.items():
                X[rows, schema.index(name)] = v
    try:
        derive(X, schema, codes, cfg)
    except SchemaError as exc:
        raise AnalysisError(f"grid cells cannot be rendered: {exc}") from exc
    X.setflags(write=False)
    return ScenarioGrid(spec, X, idx, schema.schema_id)


# ---------------------------------------------------------------------------
# score distribution
# ---------------------------------------------------------------------------


def describe(values: np.ndarray) -> dict[str, float]:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise AnalysisError("cannot describe an empty score set")
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    flat = bool(np.all(v == v[0]))
    return {
        "n": int(v.size),
        "mean": float(v.mean()),
        "median": float(med),
        "std": float(v.std(ddof=1)) if v.size > 1 else 0.0,
        # undefined moments of a constant sample are reported as 0
        "skew": 0.0 if flat else float(stats.skew(v)),
        "kurtosis": 0.0 if flat else float(stats.kurtosis(v)),
        "min": float(v.min()),
        "max": float(v.max()),
        "iqr": float(q3 - q1),
    }


@dataclass(frozen=True, eq=False)
class GridScores:
    grid: ScenarioGrid
    p_crash: np.ndarray
    raw: np.ndarray
    calibrated: np.ndarray
    level: np.ndarray

    @property
    def sigma(self) -> float:
        return describe(self.calibrated)["std"]

    def level_means(self) -> dict[str, dict[str, dict[str, float]]]:
        out: dict[str, dict[str, dict[str, float]]] = {}
        for j, f in enumerate(self.grid.spec.factors):
            out[f.name] = {}
            for k, lv in enumerate(f.levels):
                rows = self.grid.levels[:, j] == k
                out[f.name][lv.name] = {
                    "n": int(rows.sum()),
                    "raw_mean": float(self.raw[rows].mean()),
                    "calibrated_mean": float(self.calibrated[rows].mean()),
                }
        return out

    def summary(self) -> dict[str, Any]:
        counts = np.bincount(self.level, minlength=len(RiskLevel))
        return {
            "cells": len(self.grid),
            "calibrated": describe(self.calibrated),
            "raw": describe(self.raw),
            "level_counts": {lvl.label: int(counts[lvl]) for lvl in RiskLevel},
            "by_factor": self.level_means(),
        }

    def rows(self) -> list[list[Any]]:
        out = []
        for i in range(len(self.grid)):
            out.append(
                [i, *self.grid.cell_names(i), float(self.p_crash[i]), float(self.raw[i]), float(self.calibrated[i]), RiskLevel(int(self.level[i])).label]
            )
        return out

    def header(self) -> list[str]:
        return ["cell", *(f.name for f in self.grid.spec.factors), "p_crash", "raw_score", "calibrated_score", "risk_level"]


def score_distribution(grid: ScenarioGrid, model: Forest, table: CalibrationTable, bands: RiskBands = DEFAULT_BANDS) -> GridScores:
    if len(grid) == 0:
        raise AnalysisError("grid is empty")
    if grid.schema_id != model.schema_id:
        raise AnalysisError(f"grid schema {grid.schema_id!r} does not match model schema {model.schema_id!r}")
    a = assessment_arrays(model, table, bands, grid.X)
    return GridScores(grid, a["p_crash"], a["raw"], a["calibrated"], a["level"])


# ---------------------------------------------------------------------------
# expected levels for the ordinal harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpectedLevelRules:
    """Transparent risk-point table.

    points = adverse_weight * (adverse environmental conditions present)
             + speed band index + vru_weight * (VRU present)

    Adverse environmental conditions are night, poor lighting, adverse weather
    and an adverse road surface. Speed band index is 0 below the first edge,
    then 1, 2, 3 at each ``speed_edges`` crossing. ``cuts`` are the lowest
    point totals for Medium, High and Critical; everything below is Low.
    """

    adverse_flags: tuple[str, ...] = ("IS_NIGHT", "POOR_LIGHTING", "ADVERSE_WEATHER", "ADVERSE_SURFACE")
    adverse_weight: int = 5
    speed_feature: str = "SPEED_OVER"
    speed_edges: tuple[float, float, float] = (5.0, 10.0, 20.0)
    vru_feature: str = "total_vru"
    vru_weight: int = 1
    cuts: tuple[int, int, int] = (2, 4, 5)

    def points(self, X: np.ndarray, schema: FeatureSchema) -> np.ndarray:
        X = np.atleast_2d(X)
        try:
            adverse = sum(X[:, schema.index(f)] > 0 for f in self.adverse_flags)
            speed_band = np.searchsorted(np.asarray(self.speed_edges), X[:, schema.index(self.speed_feature)], side="right")
            vru = X[:, schema.index(self.vru_feature)] >= 1
        except SchemaError as exc:
            raise AnalysisError(f"expected-level rules: {exc}") from exc
        return self.adverse_weight * np.asarray(adverse, dtype=np.int64) + speed_band + self.vru_weight * vru

    def levels(self, X: np.ndarray, schema: FeatureSchema) -> np.ndarray:
        pts = self.points(X, schema)
        medium, high, critical = self.cuts
        out = np.full(pts.shape, int(RiskLevel.LOW), dtype=np.int64)
        out[pts >= medium] = RiskLevel.MEDIUM
        out[pts >= high] = RiskLevel.HIGH
        out[pts >= critical] = RiskLevel.CRITICAL
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "adverse_flags": list(self.adverse_flags),
            "adverse_weight": self.adverse_weight,
            "speed_feature": self.speed_feature,
            "speed_edges": list(self.speed_edges),
            "vru_feature": self.vru_feature,
            "vru_weight": self.vru_weight,
            "cuts": {"Medium": self.cuts[0], "High": self.cuts[1], "Critical": self.cuts[2]},
        }


def expected_levels(grid: ScenarioGrid, schema: FeatureSchema | None = None, rules: ExpectedLevelRules = ExpectedLevelRules()) -> np.ndarray:
    schema = schema or FeatureSchema.default()
    return rules.levels(grid.X, schema)
