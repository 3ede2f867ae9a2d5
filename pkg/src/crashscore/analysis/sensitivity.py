"""Score response to single-factor changes from a baseline context."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from ..errors import AnalysisError, SchemaError
from ..forest import Forest
from ..ingestion.codes import CodeMap
from ..ingestion.features import DEFAULT_FEATURE_CONFIG, FeatureConfig, rederive_context
from ..scoring import DEFAULT_BANDS, CalibrationTable, RiskBands, assess
from ..types import DrivingContext, FeatureSchema

# raw fields each factor may touch; a transition outside its factor's set is multi-factor
FACTOR_FIELDS: dict[str, frozenset[str]] = {
    "time_of_day": frozenset({"HOUR"}),
    "day_of_week": frozenset({"DAY_WEEK", "HOUR"}),
    "lighting": frozenset({"LGT_COND"}),
    "weather": frozenset({"WEATHER"}),
    "road_condition": frozenset({"VSURCOND"}),
    "speed": frozenset({"TRAV_SP"}),
    "vru_presence": frozenset({"pedestrian_count", "cyclist_count"}),
}

# clear weekday noon on a dry road at the posted limit, nobody else around
BASELINE_FIELDS: dict[str, float] = {
    "HOUR": 12,
    "DAY_WEEK": 4,
    "WEATHER": 1,
    "LGT_COND": 1,
    "VSURCOND": 1,
    "TRAV_SP": 35,
    "VSPD_LIM": 35,
    "pedestrian_count": 0,
    "cyclist_count": 0,
}


@dataclass(frozen=True)
class Transition:
    name: str
    factor: str
    updates: Mapping[str, float]

    def check(self) -> None:
        allowed = FACTOR_FIELDS.get(self.factor)
        if allowed is None:
            raise AnalysisError(f"transition {self.name!r}: unknown factor {self.factor!r}")
        extra = sorted(set(self.updates) - allowed)
        if extra:
            raise AnalysisError(f"transition {self.name!r} changes {extra} outside factor {self.factor!r}; single-factor changes only")

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "factor": self.factor, "updates": dict(sorted(self.updates.items()))}


DEFAULT_TRANSITIONS: tuple[Transition, ...] = (
    Transition("Daylight -> Dark (unlit)", "lighting", {"LGT_COND": 2}),
    Transition("Low -> High speed", "speed", {"TRAV_SP": 50}),
    Transition("Daytime -> Night", "time_of_day", {"HOUR": 2}),
    Transition("Clear -> Snow", "weather", {"WEATHER": 4}),
    Transition("Dry -> Ice", "road_condition", {"VSURCOND": 4}),
    Transition("VRU absent -> present", "vru_presence", {"pedestrian_count": 1}),
    Transition("Weekday -> Weekend night", "day_of_week", {"DAY_WEEK": 7, "HOUR": 23}),
)


def baseline_context(schema: FeatureSchema | None = None, codes: CodeMap | None = None, fields: Mapping[str, float] = BASELINE_FIELDS) -> DrivingContext:
    schema = schema or FeatureSchema.default()
    base = DrivingContext(schema.defaults, schema.schema_id)
    try:
        return rederive_context(base, schema, codes, **{k: float(v) for k, v in fields.items()})
    except SchemaError as exc:
        raise AnalysisError(f"baseline context: {exc}") from exc


@dataclass(frozen=True)
class TransitionResult:
    transition: Transition
    baseline_score: float
    changed_score: float
    delta: float
    effect_size: float | None  # |delta| / sigma

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.transition.to_dict(),
            "baseline_score": self.baseline_score,
            "changed_score": self.changed_score,
            "delta": self.delta,
            "effect_size": self.effect_size,
        }


def sensitivity(
    model: Forest,
    table: CalibrationTable,
    baseline: DrivingContext,
    transitions: Sequence[Transition] = DEFAULT_TRANSITIONS,
    sigma: float | None = None,
    bands: RiskBands = DEFAULT_BANDS,
    schema: FeatureSchema | None = None,
    codes: CodeMap | None = None,
    cfg: FeatureConfig = DEFAULT_FEATURE_CONFIG,
) -> list[TransitionResult]:
    """Calibrated-score change for each transition applied alone to ``baseline``.

    ``sigma`` is the grid score standard deviation; without it effect sizes are None.
    """
    schema = schema or FeatureSchema.default()
    for t in transitions:
        t.check()
    base_score = assess(model, table, bands, baseline).calibrated_score
    out = []
    for t in transitions:
        try:
            changed = rederive_context(baseline, schema, codes, cfg, **{k: float(v) for k, v in t.updates.items()})
        except SchemaError as exc:
            raise AnalysisError(f"transition {t.name!r}: {exc}") from exc
        score = assess(model, table, bands, changed).calibrated_score
        delta = score - base_score
        effect = None if not sigma else abs(delta) / sigma
        out.append(TransitionResult(t, base_score, score, delta, effect))
    return out
