"""Raw safety scores, rule-based multiplicative calibration and risk bands."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import ClassificationError, ConfigError, PredictionError
from .forest import Forest
from .types import DrivingContext, FeatureSchema, RiskLevel, SafetyAssessment, validate_context

FACTORS = ("road_surface", "weather", "lighting", "speed", "vru_presence", "night", "compound")
OPS = ("in", "eq", "ge", "gt", "le", "lt", "range")


def raw_score_from_crash(p_crash):
    return 100.0 * (1.0 - np.asarray(p_crash, dtype=np.float64))


def raw_score(model: Forest, context: DrivingContext) -> float:
    if context.schema_id != model.schema_id:
        raise PredictionError(f"context schema {context.schema_id!r} does not match model schema {model.schema_id!r}")
    return float(raw_score_from_crash(model.predict_crash(context.values))[0])


@dataclass(frozen=True)
class Condition:
    feature: str
    op: str
    value: Any

    def __post_init__(self):
        if self.op not in OPS:
            raise ConfigError(f"unknown condition op {self.op!r}")
        if self.op in ("in", "range"):
            v = tuple(float(x) for x in self.value)
            if self.op == "range" and (len(v) != 2 or not v[0] < v[1]):
                raise ConfigError(f"range condition needs [lo, hi) with lo < hi, got {self.value!r}")
        else:
            v = float(self.value)
        object.__setattr__(self, "value", v)

    def evaluate(self, col: np.ndarray) -> np.ndarray:
        v = self.value
        if self.op == "in":
            return np.isin(col, np.asarray(v))
        if self.op == "eq":
            return col == v
        if self.op == "ge":
            return col >= v
        if self.op == "gt":
            return col > v
        if self.op == "le":
            return col <= v
        if self.op == "lt":
            return col < v
        return (col >= v[0]) & (col < v[1])

    def holds(self, x: float) -> bool:
        """Scalar twin of ``evaluate`` for the single-context path."""
        v = self.value
        op = self.op
        if op == "in":
            return x in v
        if op == "eq":
            return x == v
        if op == "ge":
            return x >= v
        if op == "gt":
            return x > v
        if op == "le":
            return x <= v
        if op == "lt":
            return x < v
        return v[0] <= x < v[1]

    def to_dict(self) -> dict[str, Any]:
        v = list(self.value) if isinstance(self.value, tuple) else self.value
        return {"feature": self.feature, "op": self.op, "value": v}


@dataclass(frozen=True)
class CalibrationRule:
    rule_id: str
    factor: str
    alpha: float
    condition: Condition | None = None
    source: str = ""

    def __post_init__(self):
        if self.factor not in FACTORS:
            raise ConfigError(f"rule {self.rule_id!r}: unknown factor {self.factor!r}")
        a = float(self.alpha)
        if not (0.0 < a <= 1.0) or math.isnan(a):
            raise ConfigError(f"rule {self.rule_id!r}: alpha {self.alpha} outside (0, 1]")
        object.__setattr__(self, "alpha", a)
        if (self.condition is None) != (self.factor == "compound"):
            raise ConfigError(f"rule {self.rule_id!r}: only the compound rule may (and must) omit a condition")

    @property
    def sort_key(self) -> tuple[int, str]:
        return FACTORS.index(self.factor), self.rule_id

    def to_dict(self) -> dict[str, Any]:
        return {
            "rule_id": self.rule_id,
            "factor": self.factor,
            "alpha": self.alpha,
            "condition": None if self.condition is None else self.condition.to_dict(),
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "CalibrationRule":
        try:
            cond = doc.get("condition")
            return cls(
                rule_id=str(doc["rule_id"]),
                factor=str(doc["factor"]),
                alpha=doc["alpha"],
                condition=None if cond is None else Condition(cond["feature"], cond["op"], cond["value"]),
                source=str(doc.get("source", "")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed calibration rule {doc!r}: {exc}") from exc


@dataclass(frozen=True)
class CalibrationOutcome:
    """Per-row result of evaluating a table on a batch of contexts."""

    fired: np.ndarray  # (n, n_rules) bool, columns in table.rules order
    product: np.ndarray  # (n,)


@dataclass(frozen=True)
class CalibrationTable:
    rules: tuple[CalibrationRule, ...]
    compound_threshold: int = 2

    def __post_init__(self):
        # canonical order makes the float product independent of input order
        rules = tuple(sorted(self.rules, key=lambda r: r.sort_key))
        ids = [r.rule_id for r in rules]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate rule_id in calibration table")
        if sum(r.factor == "compound" for r in rules) > 1:
            raise ConfigError("at most one compound rule allowed")
        if int(self.compound_threshold) < 1:
            raise ConfigError("compound_threshold must be >= 1")
        object.__setattr__(self, "rules", rules)
        object.__setattr__(self, "compound_threshold", int(self.compound_threshold))

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "CalibrationTable":
        if not isinstance(doc, dict) or "rules" not in doc:
            raise ConfigError("calibration table must be an object with a 'rules' list")
        return cls(tuple(CalibrationRule.from_dict(r) for r in doc["rules"]), doc.get("compound_threshold", 2))

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationTable":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read calibration table {path}: {exc}") from exc
        return cls.from_dict(doc)

    @classmethod
    def default(cls) -> "CalibrationTable":
        text = resources.files("crashscore").joinpath("config").joinpath("calibration_default.json").read_text("utf-8")
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict[str, Any]:
        return {"compound_threshold": self.compound_threshold, "rules": [r.to_dict() for r in self.rules]}

    def rule(self, rule_id: str) -> CalibrationRule:
        for r in self.rules:
            if r.rule_id == rule_id:
                return r
        raise KeyError(rule_id)

    def evaluate(self, X: np.ndarray, names: Sequence[str]) -> CalibrationOutcome:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        pos = {n: i for i, n in enumerate(names)}
        if X.shape[0] == 1:
            return self._evaluate_one(X[0].tolist(), pos)
        n = X.shape[0]
        k = len(self.rules)
        fired = np.zeros((n, k), dtype=bool)
        # best (lowest alpha) matching rule per factor group
        best: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        for j, r in enumerate(self.rules):
            if r.condition is None:
                continue
            if r.condition.feature not in pos:
                raise ConfigError(f"rule {r.rule_id!r} needs feature {r.condition.feature!r}, absent from schema")
            match = r.condition.evaluate(X[:, pos[r.condition.feature]])
            cur_alpha, cur_idx = best.setdefault(r.factor, (np.full(n, np.inf), np.full(n, -1)))
            better = match & (r.alpha < cur_alpha)
            cur_alpha[better] = r.alpha
            cur_idx[better] = j
        for _, idx in best.values():
            rows = np.nonzero(idx >= 0)[0]
            fired[rows, idx[rows]] = True
        n_groups = np.zeros(n, np.int64)
        for _, idx in best.values():
            n_groups += idx >= 0
        for j, r in enumerate(self.rules):
            if r.factor == "compound":
                fired[:, j] = n_groups >= self.compound_threshold
        product = np.ones(n)
        for j, r in enumerate(self.rules):
            product = np.where(fired[:, j], product * r.alpha, product)
        return CalibrationOutcome(fired, product)

    def _evaluate_one(self, x: list[float], pos: dict[str, int]) -> CalibrationOutcome:
        # plain-float loop; multiplies in the same order as the batch path
        best: dict[str, tuple[float, int]] = {}
        for j, r in enumerate(self.rules):
            c = r.condition
            if c is None:
                continue
            if c.feature not in pos:
                raise ConfigError(f"rule {r.rule_id!r} needs feature {c.feature!r}, absent from schema")
            if c.holds(x[pos[c.feature]]) and (r.factor not in best or r.alpha < best[r.factor][0]):
                best[r.factor] = (r.alpha, j)
        fired = np.zeros((1, len(self.rules)), dtype=bool)
        for _, j in best.values():
            fired[0, j] = True
        product = 1.0
        for j, r in enumerate(self.rules):
            if r.factor == "compound":
                fired[0, j] = len(best) >= self.compound_threshold
            if fired[0, j]:
                product = product * r.alpha
        return CalibrationOutcome(fired, np.array([product]))


@dataclass(frozen=True)
class RiskBands:
    """Upper-inclusive band edges; a score equal to an edge belongs to the lower band."""

    upper: tuple[float, float, float, float, float] = (20.0, 40.0, 60.0, 75.0, 100.0)

    def __post_init__(self):
        u = tuple(float(x) for x in self.upper)
        if len(u) != len(RiskLevel) or any(b <= a for a, b in zip(u, u[1:])) or u[0] <= 0 or u[-1] != 100.0:
            raise ConfigError(f"risk bands must be {len(RiskLevel)} increasing edges ending at 100, got {self.upper}")
        object.__setattr__(self, "upper", u)

    def bounds(self, level: RiskLevel) -> tuple[float, float]:
        lo = 0.0 if level == 0 else self.upper[level - 1]
        return lo, self.upper[level]

    def classify_many(self, scores) -> np.ndarray:
        s = np.asarray(scores, dtype=np.float64)
        if np.any(~np.isfinite(s)) or np.any(s < 0.0) or np.any(s > 100.0):
            raise ClassificationError("score outside [0, 100]")
        return np.searchsorted(np.asarray(self.upper), s, side="left")

    def to_dict(self) -> dict[str, Any]:
        return {lvl.label: list(self.bounds(lvl)) for lvl in RiskLevel}

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "RiskBands":
        try:
            return cls(tuple(float(doc[lvl.label][1]) for lvl in RiskLevel))
        except (KeyError, TypeError, IndexError, ValueError) as exc:
            raise ConfigError(f"malformed risk bands: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "RiskBands":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read risk bands {path}: {exc}") from exc


DEFAULT_BANDS = RiskBands()


def classify_risk(score: float, bands: RiskBands = DEFAULT_BANDS) -> RiskLevel:
    s = float(score)
    if math.isnan(s) or not 0.0 <= s <= 100.0:
        raise ClassificationError(f"score {score!r} outside [0, 100]")
    return RiskLevel(int(bands.classify_many([s])[0]))


def _clamp(v):
    return np.clip(v, 0.0, 100.0)


def _schema_names(schema: FeatureSchema | None, schema_id: str) -> tuple[str, ...]:
    schema = schema or FeatureSchema.default()
    if schema.schema_id != schema_id:
        raise ConfigError(f"calibration needs schema {schema_id!r}, got {schema.schema_id!r}")
    return schema.names


def calibrate(
    raw: float,
    context: DrivingContext,
    table: CalibrationTable,
    bands: RiskBands = DEFAULT_BANDS,
    schema: FeatureSchema | None = None,
) -> SafetyAssessment:
    return calibrate_many(np.array([raw]), context.values.reshape(1, -1), table, _schema_names(schema, context.schema_id), bands)[0]


def calibrate_many(
    raw: np.ndarray,
    X: np.ndarray,
    table: CalibrationTable,
    names: Sequence[str],
    bands: RiskBands = DEFAULT_BANDS,
) -> list[SafetyAssessment]:
    raw = np.asarray(raw, dtype=np.float64)
    if np.any(~np.isfinite(raw)) or np.any(raw < 0.0) or np.any(raw > 100.0):
        raise ClassificationError("raw score outside [0, 100]")
    out = table.evaluate(X, names)
    cal = _clamp(raw * out.product)
    levels = bands.classify_many(cal)
    assessments = []
    for i in range(raw.shape[0]):
        applied = tuple((r.rule_id, r.alpha) for j, r in enumerate(table.rules) if out.fired[i, j])
        assessments.append(SafetyAssessment(float(raw[i]), float(cal[i]), applied, RiskLevel(int(levels[i]))))
    return assessments


def calibrated_scores(raw: np.ndarray, X: np.ndarray, table: CalibrationTable, names: Sequence[str]) -> np.ndarray:
    """Vectorised calibrated scores without building assessment objects."""
    return _clamp(np.asarray(raw, dtype=np.float64) * table.evaluate(X, names).product)


def _names_for(model: Forest) -> tuple[str, ...]:
    if model.feature_names:
        return model.feature_names
    return _schema_names(None, model.schema_id)


def assess(
    model: Forest,
    table: CalibrationTable,
    bands: RiskBands,
    context: DrivingContext,
    schema: FeatureSchema | None = None,
) -> SafetyAssessment:
    if schema is not None:
        check = validate_context(context, schema)
        if not check.ok:
            raise PredictionError("; ".join(check.violations))
    return assess_many(model, table, bands, context.values.reshape(1, -1), schema_id=context.schema_id)[0]


def assess_many(
    model: Forest,
    table: CalibrationTable,
    bands: RiskBands,
    X: np.ndarray,
    schema_id: str | None = None,
) -> list[SafetyAssessment]:
    if schema_id is not None and schema_id != model.schema_id:
        raise PredictionError(f"context schema {schema_id!r} does not match model schema {model.schema_id!r}")
    X = model.check_input(X)
    raw = raw_score_from_crash(model.predict_crash(X))
    return calibrate_many(raw, X, table, _names_for(model), bands)


def assessment_arrays(model: Forest, table: CalibrationTable, bands: RiskBands, X: np.ndarray) -> dict[str, np.ndarray]:
    """Column form of ``assess_many``: p_crash, raw, calibrated, level per row."""
    X = model.check_input(X)
    p = model.predict_crash(X)
    raw = raw_score_from_crash(p)
    cal = calibrated_scores(raw, X, table, _names_for(model))
    return {"p_crash": p, "raw": raw, "calibrated": cal, "level": bands.classify_many(cal)}
