"""Attributions and importances for a trained forest.

Explanations attribute the crash probability. The score view of a
contribution is ``-100 * phi``: a positive crash attribution lowers the
safety score by that many points.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import _kernels
from .errors import ExplanationError, MetricError
from .forest import Forest, _PackedTrees
from .ingestion.codes import CodeMap
from .ingestion.features import rederive_context
from .ingestion.split import stratified_split_indices
from .io import atomic_write_text
from .metrics import accuracy_score, roc_auc
from .scoring import DEFAULT_BANDS, CalibrationTable, RiskBands, assess
from .types import DrivingContext, FeatureSchema, LabeledDataset


@dataclass(frozen=True, eq=False)
class ShapExplanation:
    base_value: float
    contributions: np.ndarray
    model_output: float
    feature_names: tuple[str, ...] = ()

    @property
    def score_contributions(self) -> np.ndarray:
        return -100.0 * self.contributions

    @property
    def additivity_error(self) -> float:
        return abs(self.base_value + float(np.sum(self.contributions)) - self.model_output)

    def top(self, k: int = 10) -> list[tuple[str, float]]:
        order = np.lexsort((np.arange(self.contributions.size), -np.abs(self.contributions)))[:k]
        return [(self._name(i), float(self.contributions[i])) for i in order]

    def _name(self, i: int) -> str:
        return self.feature_names[i] if self.feature_names else f"f{i}"

    def to_dict(self) -> dict[str, Any]:
        names = [self._name(i) for i in range(self.contributions.size)]
        return {
            "base_value": self.base_value,
            "model_output": self.model_output,
            "contributions": {n: float(v) for n, v in zip(names, self.contributions)},
            "score_contributions": {n: float(-100.0 * v) for n, v in zip(names, self.contributions)},
        }


def _node_fractions(model: Forest, background_X: np.ndarray) -> np.ndarray:
    """Share of a parent's background rows reaching each node.

    A node whose parent no background row reaches falls back to its share of
    the parent's training rows.
    """
    packed = model.packed
    cover = packed.cover(background_X).astype(np.float64)
    frac = np.zeros_like(cover)
    frac[:, 0] = 1.0
    for t, tree in enumerate(model.trees):
        train = tree.counts.sum(axis=1).astype(np.float64)
        for node in np.nonzero(tree.feature >= 0)[0]:
            for child in (tree.left[node], tree.right[node]):
                if cover[t, node] > 0:
                    frac[t, child] = cover[t, child] / cover[t, node]
                elif train[node] > 0:
                    frac[t, child] = train[child] / train[node]
                else:
                    frac[t, child] = 0.5
    return frac


def _background_X(model: Forest, background: LabeledDataset | np.ndarray) -> np.ndarray:
    X = background.X if isinstance(background, LabeledDataset) else np.asarray(background, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ExplanationError("background set is empty")
    if X.shape[1] != model.n_features:
        raise ExplanationError(f"background has {X.shape[1]} features, model expects {model.n_features}")
    return np.ascontiguousarray(X)


@dataclass(frozen=True, eq=False)
class ShapBatch:
    base_value: float
    contributions: np.ndarray  # (n, p)
    model_output: np.ndarray  # (n,)
    feature_names: tuple[str, ...] = ()

    def __len__(self) -> int:
        return self.model_output.shape[0]

    def __getitem__(self, i: int) -> ShapExplanation:
        return ShapExplanation(self.base_value, self.contributions[i].copy(), float(self.model_output[i]), self.feature_names)

    def mean_abs(self) -> np.ndarray:
        return np.abs(self.contributions).mean(axis=0)


def tree_shap_many(model: Forest, X: np.ndarray, background: LabeledDataset | np.ndarray) -> ShapBatch:
    bg = _background_X(model, background)
    try:
        X = model.check_input(X)
    except Exception as exc:
        raise ExplanationError(str(exc)) from exc
    frac = _node_fractions(model, bg)
    p: _PackedTrees = model.packed
    phi = _kernels.shap_forest(p.feature, p.threshold, p.left, p.right, p.value, frac, p.depth, X, model.n_features)
    base = float(np.mean(model.predict_crash(bg)))
    out = model.predict_crash(X)
    return ShapBatch(base, phi, out, model.feature_names)


def tree_shap(model: Forest, context: DrivingContext, background: LabeledDataset | np.ndarray) -> ShapExplanation:
    if context.schema_id != model.schema_id:
        raise ExplanationError(f"context schema {context.schema_id!r} does not match model schema {model.schema_id!r}")
    return tree_shap_many(model, context.values.reshape(1, -1), background)[0]


def background_sample(data: LabeledDataset, size: int = 1000, seed: int = 0) -> LabeledDataset:
    """Seeded stratified sample of ``size`` rows (the whole set if smaller)."""
    if len(data) <= size:
        return data
    _, rows = stratified_split_indices(data.y, size / len(data), seed)
    return data.take(rows)


# ---------------------------------------------------------------------------
# importance rankings
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ImportanceRanking:
    method: str
    feature_names: tuple[str, ...]
    scores: np.ndarray
    detail: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.shape != (len(self.feature_names),):
            raise ExplanationError("one score per feature required")
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise ExplanationError("importance scores must be finite and nonnegative")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def order(self) -> np.ndarray:
        """Feature indices, most important first; ties go to the lower index."""
        return np.lexsort((np.arange(self.scores.size), -self.scores))

    @property
    def ranks(self) -> np.ndarray:
        """1-based rank of every feature."""
        r = np.empty(self.scores.size, np.int64)
        r[self.order] = np.arange(1, self.scores.size + 1)
        return r

    def ranked(self) -> list[tuple[str, float]]:
        return [(self.feature_names[i], float(self.scores[i])) for i in self.order]

    def rows(self) -> list[tuple[str, str, float, int]]:
        ranks = self.ranks
        return [(self.feature_names[i], self.method, float(self.scores[i]), int(ranks[i])) for i in self.order]


def _names(model: Forest) -> tuple[str, ...]:
    return model.feature_names or tuple(f"f{i}" for i in range(model.n_features))


def impurity_importance(model: Forest) -> ImportanceRanking:
    """Per-feature total Gini decrease, each tree weighted by its root count, normalised to 1."""
    total = np.zeros(model.n_features)
    for tree in model.trees:
        c = tree.counts.astype(np.float64)
        n = c.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            gini = np.where(n > 0, 1.0 - ((c / np.maximum(n, 1)[:, None]) ** 2).sum(axis=1), 0.0)
        internal = np.nonzero(tree.feature >= 0)[0]
        if internal.size == 0 or n[0] == 0:
            continue
        lft, rgt = tree.left[internal], tree.right[internal]
        dec = n[internal] * gini[internal] - n[lft] * gini[lft] - n[rgt] * gini[rgt]
        np.add.at(total, tree.feature[internal], np.maximum(dec, 0.0) / n[0])
    s = total.sum()
    scores = total / s if s > 0 else total
    return ImportanceRanking("impurity", _names(model), scores)


def permutation_importance(
    model: Forest,
    data: LabeledDataset,
    metric: str = "auc",
    repeats: int = 5,
    seed: int = 0,
) -> ImportanceRanking:
    """Mean metric drop over ``repeats`` shuffles of each column.

    Negative mean drops (shuffling helped by chance) are reported in
    ``detail["drops"]`` and clipped to 0 in the scores.
    """
    if len(data) == 0:
        raise MetricError("permutation importance needs data")
    if metric == "auc":
        fn = roc_auc
    elif metric == "accuracy":
        fn = lambda s, y: accuracy_score((s >= 0.5).astype(np.int64), y)  # noqa: E731
    else:
        raise MetricError(f"unknown metric {metric!r}")
    if repeats < 1:
        raise MetricError("repeats must be >= 1")
    X = model.check_input(data.X)
    base = fn(model.predict_crash(X), data.y)
    drops = np.zeros(model.n_features)
    Xp = X.copy()
    for j in range(model.n_features):
        col = X[:, j]
        acc = 0.0
        for r in range(repeats):
            rng = np.random.default_rng([seed, j, r])
            Xp[:, j] = col[rng.permutation(col.shape[0])]
            acc += base - fn(model.predict_crash(Xp), data.y)
        Xp[:, j] = col
        drops[j] = acc / repeats
    return ImportanceRanking(
        "permutation",
        _names(model),
        np.maximum(drops, 0.0),
        {"metric": metric, "baseline": float(base), "repeats": repeats, "seed": seed, "drops": drops.tolist()},
    )


def shap_importance(model: Forest, X: np.ndarray, background: LabeledDataset | np.ndarray) -> ImportanceRanking:
    batch = tree_shap_many(model, X, background)
    return ImportanceRanking("shap_mean_abs", _names(model), batch.mean_abs())


@dataclass(frozen=True, eq=False)
class ConsensusRanking:
    feature_names: tuple[str, ...]
    methods: tuple[str, ...]
    method_ranks: np.ndarray  # (n_methods, p), 1-based
    mean_rank: np.ndarray

    @property
    def order(self) -> np.ndarray:
        return np.lexsort((np.arange(self.mean_rank.size), self.mean_rank))

    def rows(self) -> list[dict[str, Any]]:
        out = []
        for pos, i in enumerate(self.order, start=1):
            row = {"feature": self.feature_names[i], "consensus_rank": pos, "mean_rank": float(self.mean_rank[i])}
            for m, ranks in zip(self.methods, self.method_ranks):
                row[f"rank_{m}"] = int(ranks[i])
            out.append(row)
        return out


def consensus_rank(rankings: Sequence[ImportanceRanking]) -> ConsensusRanking:
    if len(rankings) < 2:
        raise ExplanationError("consensus needs at least two rankings")
    names = rankings[0].feature_names
    for r in rankings[1:]:
        if r.feature_names != names:
            raise ExplanationError(f"ranking {r.method!r} covers a different feature set")
    ranks = np.vstack([r.ranks for r in rankings]).astype(np.float64)
    return ConsensusRanking(names, tuple(r.method for r in rankings), ranks.astype(np.int64), ranks.mean(axis=0))


# ---------------------------------------------------------------------------
# recommendations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Recommendation:
    factor: str
    change: str
    gain: float
    shap_points: float = 0.0  # score-view attribution of the features the change touches

    def to_dict(self) -> dict[str, Any]:
        return {"factor": self.factor, "change": self.change, "gain": self.gain, "shap_points": self.shap_points}


def _adjustments(context: DrivingContext, schema: FeatureSchema, codes: CodeMap) -> list[tuple[str, str, dict[str, float], tuple[str, ...]]]:
    out = []
    over = context.get(schema, "TRAV_SP") - context.get(schema, "VSPD_LIM")
    if over > 0:
        out.append(("speed", "slow to the posted limit", {"TRAV_SP": context.get(schema, "VSPD_LIM")}, ("TRAV_SP", "SPEED_OVER", "SPEEDING")))
    if context.get(schema, "LGT_COND") in codes.codeset("LGT_COND", "poor"):
        out.append(
            ("lighting", "take a daylight or well-lit route", {"LGT_COND": float(codes.safe("LGT_COND"))}, ("LGT_COND", "POOR_LIGHTING", "LGTCON_IM", "NIGHT_AND_DARK", "ADVERSE_CONDITIONS"))
        )
    return out


def recommend(
    model: Forest,
    table: CalibrationTable,
    context: DrivingContext,
    explanation: ShapExplanation | None = None,
    bands: RiskBands = DEFAULT_BANDS,
    schema: FeatureSchema | None = None,
    codes: CodeMap | None = None,
) -> list[Recommendation]:
    """Re-assess with each mutable adverse factor made safe; keep changes that raise the score."""
    schema = schema or FeatureSchema.default()
    codes = codes or CodeMap.default()
    current = assess(model, table, bands, context).calibrated_score
    recs = []
    for factor, change, updates, touched in _adjustments(context, schema, codes):
        changed = rederive_context(context, schema, codes, **updates)
        gain = assess(model, table, bands, changed).calibrated_score - current
        if gain <= 0:
            continue
        pts = 0.0
        if explanation is not None:
            pts = float(sum(explanation.score_contributions[schema.index(n)] for n in touched if n in schema))
        recs.append(Recommendation(factor, change, float(gain), pts))
    recs.sort(key=lambda r: (-r.gain, r.factor))
    return recs


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------


def ranking_csv(rankings: Sequence[ImportanceRanking]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "method", "score", "rank"])
    for r in rankings:
        for name, method, score, rank in r.rows():
            w.writerow([name, method, repr(score), rank])
    return buf.getvalue()


def write_rankings(path, rankings: Sequence[ImportanceRanking]) -> None:
    atomic_write_text(path, ranking_csv(rankings))
