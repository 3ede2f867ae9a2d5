from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import child_fractions, route_counts, shapley_exhaustive
from trees import build, forest_of, n_splits, random_tree, shapes

from crashscore.errors import ExplanationError, MetricError
from crashscore.explain import (
    ImportanceRanking,
    _node_fractions,
    background_sample,
    consensus_rank,
    impurity_importance,
    permutation_importance,
    recommend,
    tree_shap,
    tree_shap_many,
)
from crashscore.forest import ForestParams, Tree, train_forest
from crashscore.ingestion.features import rederive_context
from crashscore.scoring import DEFAULT_BANDS, CalibrationTable, assess
from crashscore.types import DrivingContext, FeatureSchema, LabeledDataset

SCHEMA = FeatureSchema.default()
TABLE = CalibrationTable.default()


def oracle_shap(tree: Tree, x: np.ndarray, bg: np.ndarray, n_features: int) -> np.ndarray:
    cover = route_counts(tree.feature, tree.threshold, tree.left, tree.right, bg)
    frac = child_fractions(tree.feature, tree.left, tree.right, cover, tree.counts.sum(axis=1))
    return shapley_exhaustive(tree.feature, tree.threshold, tree.left, tree.right, tree.value, frac, x, n_features)


def check_against_oracle(tree: Tree, X: np.ndarray, bg: np.ndarray, n_features: int) -> None:
    batch = tree_shap_many(forest_of([tree], n_features), X, bg)
    for i, x in enumerate(X):
        np.testing.assert_allclose(batch.contributions[i], oracle_shap(tree, x, bg, n_features), rtol=0, atol=1e-9)
        assert batch[i].additivity_error <= 1e-9


def test_constant_tree_has_zero_contributions():
    model = forest_of([Tree.leaf(3, 1)], 4)
    batch = tree_shap_many(model, np.random.default_rng(0).random((10, 4)), np.zeros((5, 4)))
    assert np.all(batch.contributions == 0.0)
    assert batch.base_value == 0.25


def test_depth_two_over_three_features():
    tree = build(((None, None), (None, None)), [0, 1, 2], [0.5, 0.3, 0.6], [(5, 1), (1, 4), (2, 2), (0, 6)])
    rng = np.random.default_rng(1)
    check_against_oracle(tree, rng.random((20, 3)), rng.random((40, 3)), 3)


def test_every_small_tree_exhaustively():
    # every shape of depth <= 2 with every assignment of 3 features to its splits
    rng = np.random.default_rng(2)
    bg = rng.random((30, 3))
    X = rng.random((4, 3))
    for shape in shapes(2):
        k = n_splits(shape)
        for feats in itertools.product(range(3), repeat=k):
            counts = [tuple(c) for c in rng.integers(1, 9, size=(k + 1, 2))]
            tree = build(shape, list(feats), rng.random(k).round(2).tolist(), counts)
            check_against_oracle(tree, X, bg, 3)


@pytest.mark.parametrize("shape_index", range(len(shapes(3))))
def test_depth_three_shapes_over_four_features(shape_index):
    shape = shapes(3)[shape_index]
    rng = np.random.default_rng(shape_index)
    for _ in range(6):
        tree = random_tree(rng, shape, 4)
        bg = rng.random((rng.integers(1, 25), 4))
        check_against_oracle(tree, rng.random((5, 4)), bg, 4)


@pytest.mark.parametrize("pure", [(0, 4), (4, 0)])
def test_pure_leaves_skipped_without_changing_values(pure):
    # most leaves pure, so they are treated as the tree's baseline and skipped
    shape = shapes(3)[-1]
    counts = [pure] * 6 + [(2, 3), (1, 5)]
    tree = build(shape, [0, 1, 2, 3, 1, 2, 0], [0.5, 0.4, 0.6, 0.3, 0.7, 0.2, 0.8], counts)
    rng = np.random.default_rng(4)
    check_against_oracle(tree, rng.random((8, 4)), rng.random((15, 4)), 4)


def test_unreached_nodes_fall_back_to_training_share():
    tree = build(((None, None), None), [0, 1], [0.5, 0.5], [(1, 3), (6, 2), (4, 4)])
    bg = np.full((5, 2), 0.9)  # nobody goes left at the root
    frac = _node_fractions(forest_of([tree], 2), bg)[0]
    assert frac[1] == 0.0 and frac[4] == 1.0
    assert frac[2] == pytest.approx(4 / 12) and frac[3] == pytest.approx(8 / 12)
    check_against_oracle(tree, np.array([[0.1, 0.1], [0.1, 0.9], [0.9, 0.1]]), bg, 2)


def test_symmetric_features_share_credit():
    tree = build(((None, None), (None, None)), [0, 1, 1], [0.5, 0.5, 0.5], [(4, 0), (2, 2), (2, 2), (0, 4)])
    bg = np.array([[0.2, 0.2], [0.2, 0.8], [0.8, 0.2], [0.8, 0.8]])
    mirror = build(((None, None), (None, None)), [1, 0, 0], [0.5, 0.5, 0.5], [(4, 0), (2, 2), (2, 2), (0, 4)])
    model = forest_of([tree, mirror], 2)
    for x in ([0.1, 0.1], [0.9, 0.9]):
        phi = tree_shap_many(model, np.array([x]), bg).contributions[0]
        assert phi[0] == pytest.approx(phi[1], abs=1e-12)


@given(st.integers(0, 10_000))
def test_null_feature_gets_nothing(seed):
    rng = np.random.default_rng(seed)
    trees = [random_tree(rng, shapes(3)[rng.integers(len(shapes(3)))], 3) for _ in range(3)]
    model = forest_of(trees, 4)  # feature 3 never used
    batch = tree_shap_many(model, rng.random((10, 4)), rng.random((20, 4)))
    assert np.all(batch.contributions[:, 3] == 0.0)


@given(st.integers(0, 10_000))
def test_ensemble_is_mean_of_trees(seed):
    rng = np.random.default_rng(seed)
    a, b = (random_tree(rng, shapes(3)[rng.integers(len(shapes(3)))], 4) for _ in range(2))
    X, bg = rng.random((8, 4)), rng.random((30, 4))
    both = tree_shap_many(forest_of([a, b], 4), X, bg)
    sa = tree_shap_many(forest_of([a], 4), X, bg)
    sb = tree_shap_many(forest_of([b], 4), X, bg)
    np.testing.assert_allclose(both.contributions, (sa.contributions + sb.contributions) / 2, rtol=0, atol=1e-12)
    assert both.base_value == pytest.approx((sa.base_value + sb.base_value) / 2, abs=1e-12)


def test_local_accuracy_on_trained_model(crash_data, crash_model):
    _, _, train, test = crash_data
    bg = background_sample(train, 1000, seed=0)
    batch = tree_shap_many(crash_model, test.X[:200], bg)
    recon = batch.base_value + batch.contributions.sum(axis=1)
    assert np.max(np.abs(recon - batch.model_output)) <= 1e-9
    assert batch.base_value == pytest.approx(float(crash_model.predict_crash(bg.X).mean()), abs=1e-15)


def test_single_context_matches_batch(crash_data, crash_model):
    _, _, train, test = crash_data
    bg = background_sample(train, 200, seed=1)
    e = tree_shap(crash_model, DrivingContext(test.X[3], SCHEMA.schema_id), bg)
    batch = tree_shap_many(crash_model, test.X[3:4], bg)
    assert np.array_equal(e.contributions, batch.contributions[0])
    np.testing.assert_allclose(e.score_contributions, -100 * e.contributions)


def test_empty_background_rejected():
    with pytest.raises(ExplanationError):
        tree_shap_many(forest_of([Tree.leaf(1, 1)], 2), np.zeros((1, 2)), np.zeros((0, 2)))


def test_background_sample_is_stratified_and_seeded(crash_data):
    _, data, _, _ = crash_data
    a = background_sample(data, 1000, seed=4)
    b = background_sample(data, 1000, seed=4)
    assert len(a) == 1000 and np.array_equal(a.X, b.X)
    assert abs(a.y.mean() - data.y.mean()) < 0.01


# ---------------------------------------------------------------------------
# importance rankings
# ---------------------------------------------------------------------------


def test_impurity_ranks_informative_first(single_feature):
    _, _, _, model = single_feature
    imp = impurity_importance(model)
    assert imp.order[0] == 0
    assert imp.scores.sum() == pytest.approx(1.0, abs=1e-12)


def test_impurity_of_constant_model_is_zero():
    assert np.all(impurity_importance(forest_of([Tree.leaf(2, 3)], 5)).scores == 0.0)


@given(st.integers(0, 10_000))
def test_impurity_normalised(seed):
    rng = np.random.default_rng(seed)
    trees = [random_tree(rng, shapes(3)[rng.integers(1, len(shapes(3)))], 4) for _ in range(3)]
    scores = impurity_importance(forest_of(trees, 4)).scores
    if scores.sum() > 0:
        assert scores.sum() == pytest.approx(1.0, abs=1e-12)


def test_permutation_unused_feature_drops_nothing():
    tree = build((None, None), [0], [0.5], [(9, 1), (1, 9)])
    rng = np.random.default_rng(0)
    X = rng.random((300, 3))
    ds = LabeledDataset(X, (X[:, 0] > 0.5).astype(int), FeatureSchema("p3", tuple(SCHEMA.features[i] for i in range(3))))
    perm = permutation_importance(forest_of([tree], 3), ds, "auc", repeats=3, seed=0)
    assert perm.detail["drops"][1] == 0.0 and perm.detail["drops"][2] == 0.0
    assert perm.scores[0] > 0.3


def test_permutation_finds_informative_feature(single_feature):
    _, _, test, model = single_feature
    perm = permutation_importance(model, test, "auc", repeats=3, seed=0)
    assert perm.order[0] == 0


def test_permutation_is_deterministic(single_feature):
    _, _, test, model = single_feature
    a = permutation_importance(model, test, "accuracy", repeats=5, seed=7)
    b = permutation_importance(model, test, "accuracy", repeats=5, seed=7)
    assert np.array_equal(a.scores, b.scores) and a.ranked() == b.ranked()


def test_permutation_auc_needs_both_classes(single_feature):
    _, _, test, model = single_feature
    only = test.take(np.nonzero(test.y == 1)[0])
    with pytest.raises(MetricError):
        permutation_importance(model, only, "auc", repeats=1)


def _ranking(method, scores, names=("a", "b", "c", "d")):
    return ImportanceRanking(method, names, np.asarray(scores, dtype=float))


def test_ranking_ties_break_by_index():
    r = _ranking("x", [1.0, 2.0, 2.0, 0.0])
    assert r.order.tolist() == [1, 2, 0, 3]
    assert r.ranks.tolist() == [3, 1, 2, 4]


def test_consensus_unanimous():
    rs = [_ranking(m, [4, 3, 2, 1]) for m in ("impurity", "permutation", "shap_mean_abs")]
    assert consensus_rank(rs).order.tolist() == [0, 1, 2, 3]


def test_consensus_reversed_pair_ties_to_index():
    a = _ranking("p", [2, 1], ("a", "b"))
    b = _ranking("q", [1, 2], ("a", "b"))
    c = consensus_rank([a, b])
    assert c.mean_rank.tolist() == [1.5, 1.5]
    assert c.order.tolist() == [0, 1]


def test_consensus_dominant_feature():
    rng = np.random.default_rng(0)
    rs = []
    for m in range(4):
        s = rng.random(4)
        s[2] = 5.0
        rs.append(_ranking(f"m{m}", s))
    c = consensus_rank(rs)
    assert c.order[0] == 2
    assert c.rows()[0]["feature"] == "c" and all(c.rows()[0][f"rank_m{m}"] == 1 for m in range(4))


def test_consensus_rejects_mismatch():
    with pytest.raises(ExplanationError):
        consensus_rank([_ranking("p", [1, 2], ("a", "b")), _ranking("q", [1, 2], ("a", "c"))])
    with pytest.raises(ExplanationError):
        consensus_rank([_ranking("p", [1, 2], ("a", "b"))])


# ---------------------------------------------------------------------------
# recommendations
# ---------------------------------------------------------------------------

CLEAR = rederive_context(DrivingContext(SCHEMA.defaults, SCHEMA.schema_id), SCHEMA)


def _const_model(n_safe=8, n_crash=2):
    return forest_of([Tree.leaf(n_safe, n_crash)], len(SCHEMA), SCHEMA.schema_id)


def test_speed_only_gain_matches_reassessment():
    model = _const_model()
    ctx = rederive_context(CLEAR, SCHEMA, TRAV_SP=50.0)
    recs = recommend(model, TABLE, ctx)
    assert [r.factor for r in recs] == ["speed"]
    fixed = rederive_context(ctx, SCHEMA, TRAV_SP=35.0)
    expected = assess(model, TABLE, DEFAULT_BANDS, fixed).calibrated_score - assess(model, TABLE, DEFAULT_BANDS, ctx).calibrated_score
    assert recs[0].gain == pytest.approx(expected, abs=1e-12)
    assert recs[0].gain == pytest.approx(80.0 - 80.0 * 0.75, abs=1e-12)


def test_speed_gain_on_trained_model(crash_model):
    ctx = rederive_context(CLEAR, SCHEMA, TRAV_SP=60.0)
    fixed = rederive_context(ctx, SCHEMA, TRAV_SP=35.0)
    delta = assess(crash_model, TABLE, DEFAULT_BANDS, fixed).calibrated_score - assess(crash_model, TABLE, DEFAULT_BANDS, ctx).calibrated_score
    recs = recommend(crash_model, TABLE, ctx)
    if delta > 0:
        assert len(recs) == 1 and recs[0].gain == pytest.approx(delta, abs=1e-12)
    else:
        assert recs == []


def test_all_clear_gets_no_recommendations(crash_model):
    assert recommend(crash_model, TABLE, CLEAR) == []


def test_two_adverse_factors(crash_model):
    ctx = rederive_context(CLEAR, SCHEMA, TRAV_SP=55.0, LGT_COND=2.0)
    for model in (_const_model(), crash_model):
        recs = recommend(model, TABLE, ctx)
        assert len(recs) <= 2 and all(r.gain > 0 for r in recs)
        assert [r.gain for r in recs] == sorted((r.gain for r in recs), reverse=True)
    assert {r.factor for r in recommend(_const_model(), TABLE, ctx)} == {"speed", "lighting"}


def test_recommendation_carries_shap_points(crash_data, crash_model):
    _, _, train, _ = crash_data
    ctx = rederive_context(CLEAR, SCHEMA, TRAV_SP=55.0, LGT_COND=2.0)
    e = tree_shap(crash_model, ctx, background_sample(train, 200))
    for r in recommend(crash_model, TABLE, ctx, e):
        assert np.isfinite(r.shap_points)
