"""Scenario-type validation: mean crash probability for safe, near-miss and collision episodes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from ..errors import AnalysisError, SchemaError
from ..forest import Forest
from ..ingestion.codes import CodeMap
from ..ingestion.features import DEFAULT_FEATURE_CONFIG, FeatureConfig, rederive_context
from ..ingestion.kinematics import KinematicFeatures
from ..types import DrivingContext, FeatureSchema

SCENARIO_TYPES = ("safe", "near-miss", "collision")
MPS_TO_MPH = 2.2369362920544


def scenario_type(features: KinematicFeatures) -> str:
    if features.collision_flag:
        return "collision"
    if features.near_miss_flag:
        return "near-miss"
    return "safe"


def kinematic_context(
    features: KinematicFeatures,
    meta: Mapping[str, Any],
    schema: FeatureSchema | None = None,
    codes: CodeMap | None = None,
    cfg: FeatureConfig = DEFAULT_FEATURE_CONFIG,
) -> DrivingContext:
    """Schema context for one episode.

    Numeric metadata entries naming raw schema fields (HOUR, LGT_COND, ...)
    are copied in; the ego's peak speed becomes TRAV_SP in mph and the
    pedestrian and cyclist counts come from the agent types.
    """
    schema = schema or FeatureSchema.default()
    updates: dict[str, float] = {}
    for k, v in meta.items():
        if k in schema and schema.features[schema.index(k)].is_raw and isinstance(v, (int, float)):
            updates[k] = float(v)
    updates["TRAV_SP"] = features.max_speed * MPS_TO_MPH
    updates["pedestrian_count"] = float(features.n_pedestrians)
    updates["cyclist_count"] = float(features.n_cyclists)
    base = DrivingContext(schema.defaults, schema.schema_id)
    try:
        return rederive_context(base, schema, codes, cfg, **updates)
    except SchemaError as exc:
        raise AnalysisError(f"kinematic context: {exc}") from exc


@dataclass(frozen=True)
class ScenarioValidation:
    means: dict[str, float]
    counts: dict[str, int]
    monotonic: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "types": [{"type": t, "n": self.counts[t], "mean_p_crash": self.means[t]} for t in SCENARIO_TYPES],
            "monotonic": self.monotonic,
        }


def validate_by_scenario_type(model: Forest, scenarios: Sequence[tuple[DrivingContext, str]]) -> ScenarioValidation:
    """Per-type mean p_crash; monotonic when safe < near-miss < collision strictly."""
    by_type: dict[str, list[np.ndarray]] = {t: [] for t in SCENARIO_TYPES}
    for ctx, typ in scenarios:
        if typ not in by_type:
            raise AnalysisError(f"unknown scenario type {typ!r}")
        if ctx.schema_id != model.schema_id:
            raise AnalysisError(f"context schema {ctx.schema_id!r} does not match model schema {model.schema_id!r}")
        by_type[typ].append(ctx.values)
    empty = [t for t, rows in by_type.items() if not rows]
    if empty:
        raise AnalysisError(f"no scenarios of type {', '.join(empty)}")
    means = {t: float(model.predict_crash(np.vstack(rows)).mean()) for t, rows in by_type.items()}
    counts = {t: len(rows) for t, rows in by_type.items()}
    ordered = [means[t] for t in SCENARIO_TYPES]
    return ScenarioValidation(means, counts, all(a < b for a, b in zip(ordered, ordered[1:])))
