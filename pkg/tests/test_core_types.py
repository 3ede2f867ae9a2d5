from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crashscore.errors import SchemaError
from crashscore.scoring import DEFAULT_BANDS, classify_risk
from crashscore.types import (
    GROUPS,
    ClassProbabilities,
    DrivingContext,
    FeatureSchema,
    LabeledDataset,
    RiskLevel,
    SafetyAssessment,
    canonical_json,
    validate_context,
)

SCHEMA = FeatureSchema.default()


def test_default_schema_shape():
    assert len(SCHEMA) == 64
    assert SCHEMA.group_counts() == {
        "Temporal": 10,
        "Environmental": 6,
        "Location": 8,
        "VRU": 5,
        "Interaction": 3,
        "CrashVehicle": 24,
        "Metadata": 8,
    }


def test_schema_names_unique_and_grouped():
    assert len(set(SCHEMA.names)) == len(SCHEMA)
    assert all(f.group in GROUPS for f in SCHEMA.features)
    assert sorted(i for g in GROUPS for i in SCHEMA.group_indices(g)) == list(range(64))


def test_schema_index_is_position():
    for i, name in enumerate(SCHEMA.names):
        assert SCHEMA.index(name) == i
    with pytest.raises(SchemaError):
        SCHEMA.index("NOT_A_FEATURE")


def test_schema_round_trip():
    doc = json.loads(canonical_json(SCHEMA.to_dict()))
    again = FeatureSchema.from_dict(doc)
    assert again == SCHEMA
    assert canonical_json(again.to_dict()) == canonical_json(SCHEMA.to_dict())


def test_duplicate_feature_names_rejected():
    doc = SCHEMA.to_dict()
    doc["features"][1]["name"] = doc["features"][0]["name"]
    with pytest.raises(SchemaError):
        FeatureSchema.from_dict(doc)


def test_validate_context_ok():
    assert validate_context(DrivingContext(SCHEMA.defaults, SCHEMA.schema_id), SCHEMA).ok


def test_validate_context_length_mismatch():
    res = validate_context(DrivingContext(np.zeros(63), SCHEMA.schema_id), SCHEMA)
    assert not res.ok
    assert any("length mismatch" in v for v in res.violations)


def test_validate_context_names_bad_binary():
    name = SCHEMA.features[int(SCHEMA.binary_indices[0])].name
    ctx = DrivingContext(SCHEMA.defaults, SCHEMA.schema_id).replace(SCHEMA, **{name: 0.5})
    res = validate_context(ctx, SCHEMA)
    assert not res.ok
    assert any(name in v for v in res.violations)


def test_context_values_are_immutable():
    ctx = DrivingContext(SCHEMA.defaults, SCHEMA.schema_id)
    with pytest.raises(ValueError):
        ctx.values[0] = 1.0


@given(st.floats(0, 100), st.floats(0, 100))
def test_risk_rank_is_monotone(a, b):
    lo, hi = min(a, b), max(a, b)
    assert classify_risk(lo, DEFAULT_BANDS) <= classify_risk(hi, DEFAULT_BANDS)


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=64, max_size=64))
def test_context_round_trip(values):
    ctx = DrivingContext(np.array(values), SCHEMA.schema_id)
    text = canonical_json(ctx.to_dict())
    back = DrivingContext.from_dict(json.loads(text))
    assert back == ctx
    assert canonical_json(back.to_dict()) == text


@given(
    st.floats(0, 100),
    st.floats(0, 1),
    st.lists(st.tuples(st.sampled_from(["road_ice", "night", "vru_present"]), st.floats(0.01, 1.0)), max_size=3),
    st.sampled_from(list(RiskLevel)),
)
def test_assessment_round_trip(raw, factor, penalties, level):
    a = SafetyAssessment(raw, raw * factor, tuple(penalties), level)
    text = canonical_json(a.to_dict())
    back = SafetyAssessment.from_dict(json.loads(text))
    assert back == a
    assert canonical_json(back.to_dict()) == text


@given(st.floats(0, 1))
def test_class_probabilities_round_trip(p):
    cp = ClassProbabilities.from_crash(p)
    assert abs(cp.p_safe + cp.p_crash - 1.0) <= 1e-12
    assert ClassProbabilities.from_dict(json.loads(canonical_json(cp.to_dict()))) == cp


def test_risk_level_labels():
    assert [lvl.label for lvl in RiskLevel] == ["Critical", "High", "Medium", "Low", "Excellent"]
    assert RiskLevel.parse(" high ") is RiskLevel.HIGH


def test_dataset_groups_default_and_carry():
    X = np.tile(SCHEMA.defaults, (4, 1))
    ds = LabeledDataset(X, [1, 0, 1, 0], SCHEMA)
    assert ds.groups.tolist() == [0, 1, 2, 3]
    assert ds.take([3, 1]).groups.tolist() == [3, 1]
    paired = LabeledDataset(X, [1, 0, 1, 0], SCHEMA, groups=[0, 0, 1, 1])
    both = LabeledDataset.concat([paired, paired])
    assert both.groups.tolist() == [0, 0, 1, 1, 2, 2, 3, 3]


def test_dataset_shape_checks():
    with pytest.raises(SchemaError):
        LabeledDataset(np.zeros((3, 64)), [0, 1], SCHEMA)
    with pytest.raises(SchemaError):
        LabeledDataset(np.zeros((2, 63)), [0, 1], SCHEMA)
    with pytest.raises(SchemaError):
        LabeledDataset(np.zeros((2, 64)), [0, 1], SCHEMA, groups=[0])
