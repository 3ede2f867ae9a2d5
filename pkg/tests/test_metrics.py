from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import auc_pairwise, auc_trapezoid, average_precision_sweep, roc_points

from crashscore.errors import MetricError
from crashscore.forest import ForestParams
from crashscore.metrics import (
    ConfusionMatrix,
    MetricSummary,
    confusion,
    cross_validate,
    ordinal_confusion,
    pr_metrics,
    roc_auc,
    roc_curve,
)
from crashscore.types import FeatureSchema, FeatureSpec, LabeledDataset, RiskLevel


def test_reference_confusion_metrics():
    cm = ConfusionMatrix(tp=2227, fp=139, fn=2412, tn=4500)
    assert cm.precision == pytest.approx(0.941, abs=1e-3)
    assert cm.recall == pytest.approx(0.480, abs=1e-3)
    assert cm.f1 == pytest.approx(0.636, abs=1e-3)
    assert cm.safe_recall == pytest.approx(0.970, abs=1e-3)


def test_all_correct_accuracy_one():
    y = [0, 1, 1, 0, 1]
    assert confusion(y, y).accuracy == 1.0


def test_precision_undefined_without_positive_predictions():
    cm = confusion([0, 0, 0], [0, 1, 0])
    assert cm.precision is None and cm.f1 is None
    assert cm.to_dict()["precision"] is None


def test_confusion_length_mismatch():
    with pytest.raises(MetricError):
        confusion([0, 1], [0])
    with pytest.raises(MetricError):
        confusion([], [])


@given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 500), st.integers(0, 500))
def test_confusion_identities(tp, fp, fn, tn):
    cm = ConfusionMatrix(tp, fp, fn, tn)
    if cm.total:
        assert cm.accuracy == pytest.approx((tp + tn) / cm.total)
    p, r = cm.precision, cm.recall
    if p is not None and r is not None and p + r > 0:
        assert cm.f1 == pytest.approx(2 * p * r / (p + r))
    pred = [1] * tp + [1] * fp + [0] * fn + [0] * tn
    truth = [1] * tp + [0] * fp + [1] * fn + [0] * tn
    if pred:
        assert confusion(pred, truth) == cm


def test_auc_examples():
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert roc_auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0
    assert roc_auc([0.8, 0.8], [1, 0]) == 0.5
    with pytest.raises(MetricError):
        roc_auc([0.1, 0.2], [1, 1])


scores_labels = st.integers(2, 60).flatmap(
    lambda n: st.tuples(
        st.lists(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.7, 0.9, 1.0]) | st.floats(0, 1), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n),
    )
)


@given(scores_labels)
def test_auc_matches_pairwise_and_trapezoid(sl):
    s, y = sl
    if len(set(y)) < 2:
        return
    auc = roc_auc(s, y)
    assert abs(auc - auc_pairwise(s, y)) <= 1e-9
    assert abs(auc - auc_trapezoid(s, y)) <= 1e-9


@given(scores_labels)
def test_roc_curve_matches_sweep(sl):
    s, y = sl
    if len(set(y)) < 2:
        return
    fpr, tpr, _ = roc_curve(s, y)
    ofpr, otpr = roc_points(s, y)
    np.testing.assert_allclose(fpr, ofpr, atol=1e-12)
    np.testing.assert_allclose(tpr, otpr, atol=1e-12)


def test_shuffled_labels_auc_near_half():
    rng = np.random.default_rng(0)
    s = rng.random(10_000)
    y = (s > 0.5).astype(int)
    assert abs(roc_auc(s, rng.permutation(y)) - 0.5) <= 0.03


def test_ap_examples():
    assert pr_metrics([0.9, 0.6, 0.4], [1, 0, 1]).average_precision == pytest.approx(5 / 6, abs=1e-12)
    assert pr_metrics([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]).average_precision == 1.0
    with pytest.raises(MetricError):
        pr_metrics([0.2, 0.3], [0, 0])


def test_ap_random_is_prevalence():
    rng = np.random.default_rng(1)
    y = np.repeat([0, 1], 5000)
    assert abs(pr_metrics(rng.random(10_000), y).average_precision - 0.5) <= 0.02


@given(scores_labels)
def test_ap_matches_sweep(sl):
    s, y = sl
    if 1 not in y:
        return
    assert abs(pr_metrics(s, y).average_precision - average_precision_sweep(s, y)) <= 1e-12


def test_pr_curve_sorted_by_recall():
    rng = np.random.default_rng(2)
    pr = pr_metrics(rng.random(300), rng.integers(0, 2, 300))
    assert np.all(np.diff(pr.recall) >= 0)
    assert np.all(np.diff(pr.thresholds) < 0)


def test_operating_point_at_half():
    s = np.array([0.9, 0.6, 0.4, 0.5, 0.1])
    y = np.array([1, 0, 1, 1, 0])
    assert pr_metrics(s, y).operating_point == confusion((s >= 0.5).astype(int), y)


def test_ordinal_identical():
    levels = list(RiskLevel) * 3
    oc = ordinal_confusion(levels, levels)
    assert oc.accuracy == 1.0 and oc.max_distance == 0 and oc.adjacent_share == 1.0


def test_ordinal_adjacent_error():
    oc = ordinal_confusion([RiskLevel.CRITICAL, RiskLevel.LOW], [RiskLevel.HIGH, RiskLevel.LOW])
    assert oc.max_distance == 1 and oc.accuracy == 0.5
    assert oc.matrix[RiskLevel.HIGH, RiskLevel.CRITICAL] == 1
    assert oc.count_at_distance(2) == 0


def test_ordinal_far_error_counted():
    oc = ordinal_confusion([RiskLevel.EXCELLENT], [RiskLevel.CRITICAL])
    assert oc.max_distance == 4 and oc.count_at_distance(2) == 1 and oc.adjacent_share == 0.0
    with pytest.raises(MetricError):
        ordinal_confusion([RiskLevel.LOW], [])


def test_summary_statistics():
    s = MetricSummary.of([0.9, 0.92, 0.94])
    assert s.mean == pytest.approx(0.92)
    assert s.std == pytest.approx(0.02)
    assert s.ci_low == pytest.approx(0.92 - 1.96 * 0.02 / np.sqrt(3))
    assert s.cv_percent == pytest.approx(100 * 0.02 / 0.92)


def _perfect_rule_dataset(n=60):
    x = np.repeat(np.linspace(0, 1, n // 2), 2)
    X = np.column_stack([x, np.zeros_like(x)])
    y = (x > 0.5).astype(int)
    return LabeledDataset(X, y, FeatureSchema("rule2", (FeatureSpec("x", "Metadata"), FeatureSpec("z", "Metadata"))))


def test_cv_fold_count_and_partition():
    ds = _perfect_rule_dataset()
    rep = cross_validate(ds, 5, [0, 1, 2], ForestParams(n_estimators=3, min_samples_leaf=1))
    assert len(rep.folds) == 15
    for seed in (0, 1, 2):
        assert sum(f["n_test"] for f in rep.folds if f["seed"] == seed) == len(ds)


def test_cv_perfect_rule_has_zero_spread():
    rep = cross_validate(_perfect_rule_dataset(), 5, [0, 1, 2], ForestParams(n_estimators=5, min_samples_leaf=1))
    assert all(f["accuracy"] == 1.0 for f in rep.folds)
    assert rep.summary["accuracy"].cv_percent == 0.0


def test_cv_is_deterministic():
    ds = _perfect_rule_dataset()
    a = cross_validate(ds, 3, [4], ForestParams(n_estimators=2))
    b = cross_validate(ds, 3, [4], ForestParams(n_estimators=2))
    assert a.to_dict() == b.to_dict()


def test_cv_rejects_tiny_class():
    X = np.arange(10.0).reshape(-1, 1)
    y = np.array([0] * 8 + [1] * 2)
    ds = LabeledDataset(X, y, FeatureSchema("tiny", (FeatureSpec("x", "Metadata"),)))
    with pytest.raises(MetricError):
        cross_validate(ds, 5, [0])
    with pytest.raises(MetricError):
        cross_validate(ds, 1, [0])
