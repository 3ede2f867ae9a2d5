"""Acceptance suite: one test per headline criterion, each reported as PASS/FAIL in the summary."""
from __future__ import annotations

import hashlib
import itertools
import random
import time
from pathlib import Path

import numpy as np
import pytest
from acceptance_log import criterion
from oracles import auc_trapezoid, child_fractions, hand_calibrated, route_counts, shapley_exhaustive
from test_scoring import DOMAINS
from trees import build, forest_of, n_splits, random_tree, shapes

from crashscore.analysis import (
    AblationConfig,
    build_scenario_grid,
    expected_levels,
    kinematic_context,
    kmeans,
    pair,
    ablate,
    scenario_type,
    score_distribution,
    validate_by_scenario_type,
)
from crashscore.cli import main as cli_main
from crashscore.explain import background_sample, tree_shap_many
from crashscore.fixtures import ARCHETYPE_CENTERS, PlantedSignal, planted_blobs, planted_signal_dataset, trajectory_episodes
from crashscore.forest import ForestParams, train_forest
from crashscore.ingestion import extract_kinematics, stratified_split
from crashscore.metrics import ConfusionMatrix, accuracy_score, cross_validate, ordinal_confusion, roc_auc
from crashscore.scoring import DEFAULT_BANDS, CalibrationTable, assess, calibrate, classify_risk
from crashscore.types import DrivingContext, FeatureSchema, RiskLevel

SCHEMA = FeatureSchema.default()
TABLE = CalibrationTable.default()


def test_c01_calibration_arithmetic():
    with criterion(1, "calibration arithmetic (50 contexts, 1e-9, rule-order invariant, < 1 s)"):
        rng = np.random.default_rng(2024)
        rules = list(TABLE.rules)
        random.Random(7).shuffle(rules)
        shuffled = CalibrationTable(tuple(rules), TABLE.compound_threshold)
        start = time.perf_counter()
        for _ in range(50):
            fields = {k: float(rng.choice(v)) for k, v in DOMAINS.items()}
            raw = float(rng.uniform(0, 100))
            ctx = DrivingContext(SCHEMA.defaults, SCHEMA.schema_id).replace(SCHEMA, **fields)
            a = calibrate(raw, ctx, TABLE)
            product = float(np.prod([alpha for _, alpha in a.applied_penalties]))
            assert abs(a.calibrated_score - raw * product) <= 1e-9
            assert abs(a.calibrated_score - hand_calibrated(raw, fields)) <= 1e-9
            assert calibrate(raw, ctx, shuffled) == a
        assert time.perf_counter() - start < 1.0


def test_c02_risk_bands():
    with criterion(2, "risk band boundaries map exactly (< 1 s)"):
        start = time.perf_counter()
        expected = {
            0: RiskLevel.CRITICAL, 20: RiskLevel.CRITICAL,
            21: RiskLevel.HIGH, 40: RiskLevel.HIGH,
            41: RiskLevel.MEDIUM, 60: RiskLevel.MEDIUM,
            61: RiskLevel.LOW, 75: RiskLevel.LOW,
            76: RiskLevel.EXCELLENT, 100: RiskLevel.EXCELLENT,
        }  # fmt: skip
        for score, level in expected.items():
            assert classify_risk(score, DEFAULT_BANDS) is level, score
        assert time.perf_counter() - start < 1.0


def test_c03_confusion_metrics():
    with criterion(3, "confusion metrics from the four reference counts (+-0.001)"):
        cm = ConfusionMatrix(tp=2227, fp=139, fn=2412, tn=4500)
        assert abs(cm.precision - 0.941) <= 1e-3
        assert abs(cm.recall - 0.480) <= 1e-3
        assert abs(cm.f1 - 0.636) <= 1e-3
        assert abs(cm.safe_recall - 0.970) <= 1e-3


def _oracle(tree, x, bg, p):
    cover = route_counts(tree.feature, tree.threshold, tree.left, tree.right, bg)
    frac = child_fractions(tree.feature, tree.left, tree.right, cover, tree.counts.sum(axis=1))
    return shapley_exhaustive(tree.feature, tree.threshold, tree.left, tree.right, tree.value, frac, x, p)


def _hand_trees(rng):
    """Every shape of depth <= 3 for every feature count 1..4.

    Shapes of depth <= 2 get every feature assignment; deeper shapes get a
    sample of assignments (4^7 per full depth-3 shape is too many to walk).
    """
    for p in range(1, 5):
        for shape in shapes(3):
            k = n_splits(shape)
            if k <= 3:
                for feats in itertools.product(range(p), repeat=k):
                    counts = [tuple(c) for c in rng.integers(0, 12, size=(k + 1, 2)) + [[1, 0]]]
                    yield p, build(shape, list(feats), rng.random(k).round(2).tolist(), counts)
            else:
                for _ in range(6):
                    yield p, random_tree(rng, shape, p)


def test_c04_tree_shap(crash_data, crash_model):
    with criterion(4, "TreeSHAP local accuracy (200 contexts) and exhaustive Shapley match (< 30 s)"):
        _, _, train, test = crash_data
        start = time.perf_counter()
        bg = background_sample(train, 1000, seed=0)
        batch = tree_shap_many(crash_model, test.X[:200], bg)
        err = np.abs(batch.base_value + batch.contributions.sum(axis=1) - batch.model_output)
        assert err.max() <= 1e-9
        rng = np.random.default_rng(0)
        n_trees = 0
        for p, tree in _hand_trees(rng):
            bg_small = rng.random((int(rng.integers(1, 20)), p))
            X = rng.random((3, p))
            got = tree_shap_many(forest_of([tree], p), X, bg_small).contributions
            for i in range(X.shape[0]):
                assert np.max(np.abs(got[i] - _oracle(tree, X[i], bg_small, p))) <= 1e-9
            n_trees += 1
        # every assignment: 9 + 51 + 157 + 357 trees over 1..4 features; 17 deeper shapes x 6 x 4
        assert n_trees == 574 + 408
        assert time.perf_counter() - start < 30.0


def test_c05_auc_oracle():
    with criterion(5, "rank AUC equals trapezoid AUC (100 instances); shuffled labels give 0.5 +- 0.03"):
        rng = np.random.default_rng(5)
        for _ in range(100):
            n = int(rng.integers(5, 200))
            s = np.round(rng.random(n), int(rng.integers(1, 4)))  # rounding forces ties
            y = rng.integers(0, 2, n)
            y[:2] = [0, 1]
            assert abs(roc_auc(s, y) - auc_trapezoid(s.tolist(), y.tolist())) <= 1e-9
        s = rng.random(10_000)
        y = (s + rng.normal(0, 0.1, s.size) > 0.5).astype(int)
        assert abs(roc_auc(s, rng.permutation(y)) - 0.5) <= 0.03


@pytest.mark.slow
def test_c06_planted_signal_learning():
    with criterion(6, "planted signal: AUC > 0.90, gap < 3%, CV% of AUC < 5% (< 5 min)"):
        start = time.perf_counter()
        data = planted_signal_dataset(PlantedSignal(n_rows=20_000), seed=0)
        train, test = stratified_split(data, 0.2, 0)
        model = train_forest(train, ForestParams(n_estimators=100, seed=0))
        assert roc_auc(model.predict_crash(test.X), test.y) > 0.90
        acc = lambda d: accuracy_score((model.predict_crash(d.X) >= 0.5).astype(int), d.y)  # noqa: E731
        assert acc(train) - acc(test) < 0.03
        cv = cross_validate(data, 5, [0, 1, 2], ForestParams(n_estimators=100))
        assert len(cv.folds) == 15
        assert cv.summary["auc"].cv_percent < 5.0
        assert time.perf_counter() - start < 300.0


@pytest.mark.slow
def test_c07_ablation_sanity():
    with criterion(7, "ablation: no-signal AUC in [0.45, 0.55], noise removal < 2%, paired drop >= max single"):
        params = ForestParams(n_estimators=60, seed=1)
        # one informative group (both signal features live in Environmental)
        one = planted_signal_dataset(PlantedSignal(n_rows=10_000), seed=1)
        rep = ablate(one, [AblationConfig("baseline"), AblationConfig("Environmental", ("Environmental",)), AblationConfig("Temporal", ("Temporal",)), AblationConfig("Metadata", ("Metadata",))], params, split_seed=1)
        assert 0.45 <= rep.row("Environmental").auc <= 0.55
        assert abs(rep.row("Temporal").delta_auc_pct) < 2.0
        assert abs(rep.row("Metadata").delta_auc_pct) < 2.0
        # signal split across two groups for the paired removal
        two = planted_signal_dataset(PlantedSignal(n_rows=10_000, informative_groups=("Environmental", "Location")), seed=2)
        env, loc = AblationConfig("Environmental", ("Environmental",)), AblationConfig("Location", ("Location",))
        rep2 = ablate(two, [AblationConfig("baseline"), env, loc, pair(env, loc)], params, split_seed=2)
        base = rep2.rows[0].auc
        drops = {r.config.name: base - r.auc for r in rep2.rows}
        assert drops["Environmental+Location"] >= max(drops["Environmental"], drops["Location"])


def test_c08_grid_ordinal_gate(crash_model):
    with criterion(8, "864-cell grid; ordinal accuracy >= 0.80 with no errors of distance >= 2"):
        grid = build_scenario_grid()
        assert len(grid) == 864
        gs = score_distribution(grid, crash_model, TABLE)
        oc = ordinal_confusion(gs.level, expected_levels(grid))
        assert oc.accuracy >= 0.80, oc.accuracy
        assert oc.count_at_distance(2) == 0


def test_c09_scenario_type_monotonicity(crash_model):
    with criterion(9, "mean p_crash: safe < near-miss < collision on fixture episodes"):
        scenarios, meta = trajectory_episodes(n_per_type=20, seed=0)
        pairs = []
        for sc in scenarios:
            kf = extract_kinematics(sc)
            assert scenario_type(kf) == meta[sc.scenario_id]["scenario_type"]
            pairs.append((kinematic_context(kf, meta[sc.scenario_id]), scenario_type(kf)))
        res = validate_by_scenario_type(crash_model, pairs)
        assert res.means["safe"] < res.means["near-miss"] < res.means["collision"]
        assert res.monotonic


def test_c10_clustering_recovery():
    with criterion(10, "k-means recovers archetype blobs within 0.1; objective never increases"):
        for seed in range(5):
            pts, _ = planted_blobs(seed=seed)
            res = kmeans(pts, 4, seed=seed)
            for c in ARCHETYPE_CENTERS:
                assert np.min(np.max(np.abs(res.centers - np.asarray(c)), axis=1)) <= 0.1
            hist = res.inertia_history
            assert all(b <= a for a, b in zip(hist, hist[1:]))


def test_c11_single_context_latency(crash_data, crash_model):
    with criterion(11, "single-context assess on a 100-tree, 64-feature model: mean < 1 ms over 10,000 calls"):
        assert len(crash_model.trees) == 100 and crash_model.n_features == 64
        _, data, _, _ = crash_data
        ctxs = [DrivingContext(x, SCHEMA.schema_id) for x in data.X[:10_000]]
        assess(crash_model, TABLE, DEFAULT_BANDS, ctxs[0])  # warm-up
        start = time.perf_counter()
        for c in ctxs:
            assess(crash_model, TABLE, DEFAULT_BANDS, c)
        mean_ms = (time.perf_counter() - start) / len(ctxs) * 1e3
        assert len(ctxs) == 10_000
        assert mean_ms < 1.0, mean_ms


def _digest(d: Path) -> dict[str, str]:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(d.iterdir()) if p.is_file()}


def test_c12_cli_determinism(tmp_path):
    with criterion(12, "CLI commands run twice give byte-identical reports"):
        fx, model = tmp_path / "fx-a", tmp_path / "train-a" / "model.json"
        data = str(fx / "crashes.csv")
        commands = {
            "fx": ["fixture", "--seed", "3", "--n-crashes", "800", "--n-per-type", "5"],
            "train": ["train", "--seed", "3", "--data", data, "--n-estimators", "15"],
            "grid": ["grid", "--model", str(model)],
            "explain": ["explain", "--seed", "3", "--data", data, "--model", str(model), "--n-explain", "3", "--permutation-rows", "200", "--shap-rows", "20", "--background-size", "100"],
        }
        for name, argv in commands.items():
            a, b = tmp_path / f"{name}-a", tmp_path / f"{name}-b"
            assert cli_main([*argv, "--out", str(a)]) == 0, argv
            assert cli_main([*argv, "--out", str(b)]) == 0, argv
            da, db = _digest(a), _digest(b)
            assert da == db and len(da) >= 2, name
