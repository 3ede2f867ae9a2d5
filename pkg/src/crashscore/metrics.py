"""Binary and ordinal classification metrics plus stratified cross-validation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import MetricError, SplitError
from .forest import ForestParams, train_forest
from .ingestion.split import stratified_folds
from .types import LabeledDataset, RiskLevel


def _pair(a, b, what: str) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise MetricError(f"{what}: length mismatch {a.shape} vs {b.shape}")
    if a.size == 0:
        raise MetricError(f"{what}: empty input")
    return a, b


def _div(num: float, den: float) -> float | None:
    return None if den == 0 else num / den


@dataclass(frozen=True)
class ConfusionMatrix:
    """Crash is the positive class. Undefined ratios are ``None``."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise MetricError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def precision(self) -> float | None:
        return _div(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float | None:
        return _div(self.tp, self.tp + self.fn)

    @property
    def safe_precision(self) -> float | None:
        return _div(self.tn, self.tn + self.fn)

    @property
    def safe_recall(self) -> float | None:
        return _div(self.tn, self.tn + self.fp)

    @property
    def f1(self) -> float | None:
        p, r = self.precision, self.recall
        if p is None or r is None or p + r == 0:
            return None
        return 2 * p * r / (p + r)

    @property
    def accuracy(self) -> float | None:
        return _div(self.tp + self.tn, self.total)

    def to_dict(self) -> dict[str, Any]:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "accuracy": self.accuracy,
            "safe_precision": self.safe_precision,
            "safe_recall": self.safe_recall,
        }


def confusion(predictions, truth) -> ConfusionMatrix:
    p, t = _pair(predictions, truth, "confusion")
    p = p.astype(np.int64)
    t = t.astype(np.int64)
    return ConfusionMatrix(
        tp=int(np.sum((p == 1) & (t == 1))),
        fp=int(np.sum((p == 1) & (t == 0))),
        fn=int(np.sum((p == 0) & (t == 1))),
        tn=int(np.sum((p == 0) & (t == 0))),
    )


def accuracy_score(predictions, truth) -> float:
    p, t = _pair(predictions, truth, "accuracy")
    return float(np.mean(p == t))


def roc_auc(scores, truth) -> float:
    """Mann-Whitney form: P(score_pos > score_neg) with ties counted as one half."""
    s, t = _pair(scores, truth, "roc_auc")
    pos = t == 1
    n1 = int(pos.sum())
    n0 = t.size - n1
    if n1 == 0 or n0 == 0:
        raise MetricError("roc_auc needs both classes")
    r = rankdata(s.astype(np.float64))
    return float((r[pos].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def roc_curve(scores, truth) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(fpr, tpr, thresholds) with one point per distinct score, starting at (0, 0)."""
    s, t = _pair(scores, truth, "roc_curve")
    t = t.astype(np.int64)
    n1 = int(t.sum())
    n0 = t.size - n1
    if n1 == 0 or n0 == 0:
        raise MetricError("roc_curve needs both classes")
    order = np.argsort(-s, kind="stable")
    s, t = s[order], t[order]
    last = np.r_[np.nonzero(s[1:] != s[:-1])[0], s.size - 1]
    tps = np.cumsum(t)[last]
    fps = (last + 1) - tps
    return np.r_[0.0, fps / n0], np.r_[0.0, tps / n1], np.r_[np.inf, s[last]]


@dataclass(frozen=True)
class PRResult:
    precision: np.ndarray
    recall: np.ndarray
    thresholds: np.ndarray
    average_precision: float
    operating_point: ConfusionMatrix

    def curve_rows(self) -> list[tuple[float, float, float]]:
        return [(float(a), float(b), float(c)) for a, b, c in zip(self.thresholds, self.precision, self.recall)]

    def to_dict(self) -> dict[str, Any]:
        op = self.operating_point
        return {
            "average_precision": self.average_precision,
            "operating_point": {"threshold": 0.5, "precision": op.precision, "recall": op.recall},
            "n_points": int(self.thresholds.size),
        }


def pr_metrics(scores, truth, threshold: float = 0.5) -> PRResult:
    """Step-wise AP: sum over distinct thresholds of (R_n - R_{n-1}) * P_n."""
    s, t = _pair(scores, truth, "pr_metrics")
    t = t.astype(np.int64)
    n1 = int(t.sum())
    if n1 == 0:
        raise MetricError("pr_metrics needs at least one positive")
    order = np.argsort(-s, kind="stable")
    ss, ts = s[order], t[order]
    last = np.r_[np.nonzero(ss[1:] != ss[:-1])[0], ss.size - 1]
    tps = np.cumsum(ts)[last].astype(np.float64)
    predicted = (last + 1).astype(np.float64)
    precision = tps / predicted
    recall = tps / n1
    ap = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    op = confusion((s >= threshold).astype(np.int64), t)
    return PRResult(precision, recall, ss[last], ap, op)


@dataclass(frozen=True)
class OrdinalConfusion:
    matrix: np.ndarray  # rows: expected rank, columns: predicted rank

    @property
    def total(self) -> int:
        return int(self.matrix.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.matrix) / self.total) if self.total else math.nan

    def _distances(self) -> np.ndarray:
        k = self.matrix.shape[0]
        return np.abs(np.subtract.outer(np.arange(k), np.arange(k)))

    @property
    def max_distance(self) -> int:
        d = self._distances()
        nz = self.matrix > 0
        return int(d[nz].max()) if nz.any() else 0

    @property
    def adjacent_share(self) -> float:
        """Share of errors that are one level off (1.0 when there are no errors)."""
        d = self._distances()
        errors = self.matrix[d > 0].sum()
        return float(self.matrix[d == 1].sum() / errors) if errors else 1.0

    def count_at_distance(self, k: int) -> int:
        return int(self.matrix[self._distances() >= k].sum())

    def to_dict(self) -> dict[str, Any]:
        return {
            "levels": [lvl.label for lvl in RiskLevel],
            "matrix": self.matrix.tolist(),
            "accuracy": self.accuracy,
            "max_distance": self.max_distance,
            "adjacent_share": self.adjacent_share,
            "errors_distance_ge_2": self.count_at_distance(2),
        }


def ordinal_confusion(predicted: Sequence, expected: Sequence) -> OrdinalConfusion:
    if len(predicted) != len(expected):
        raise MetricError(f"ordinal_confusion: length mismatch {len(predicted)} vs {len(expected)}")
    k = len(RiskLevel)
    m = np.zeros((k, k), np.int64)
    p = np.asarray([int(x) for x in predicted], np.int64)
    e = np.asarray([int(x) for x in expected], np.int64)
    if p.size and (p.min() < 0 or p.max() >= k or e.min() < 0 or e.max() >= k):
        raise MetricError("risk level rank out of range")
    np.add.at(m, (e, p), 1)
    return OrdinalConfusion(m)


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    std: float
    ci_low: float
    ci_high: float
    cv_percent: float | None

    @classmethod
    def of(cls, values: Sequence[float]) -> "MetricSummary":
        v = np.asarray(values, dtype=np.float64)
        mean = float(v.mean())
        std = float(v.std(ddof=1)) if v.size > 1 else 0.0
        half = 1.96 * std / math.sqrt(v.size)
        cvp = None if mean == 0 else 100.0 * std / mean
        return cls(mean, std, mean - half, mean + half, cvp)

    def to_dict(self) -> dict[str, Any]:
        return {"mean": self.mean, "std": self.std, "ci95": [self.ci_low, self.ci_high], "cv_percent": self.cv_percent}


@dataclass(frozen=True)
class CVReport:
    folds: list[dict[str, Any]]
    summary: dict[str, MetricSummary] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"folds": self.folds, "summary": {k: v.to_dict() for k, v in self.summary.items()}}


def evaluate_scores(p_crash: np.ndarray, y: np.ndarray, threshold: float = 0.5) -> dict[str, Any]:
    pr = pr_metrics(p_crash, y, threshold)
    cm = confusion((np.asarray(p_crash) >= threshold).astype(np.int64), y)
    return {"auc": roc_auc(p_crash, y), "average_precision": pr.average_precision, "accuracy": cm.accuracy, "confusion": cm.to_dict()}


def cross_validate(data: LabeledDataset, k: int, seeds: Sequence[int], params: ForestParams = ForestParams(), n_jobs: int = 1) -> CVReport:
    """Stratified k-fold per seed; each fold trains a fresh forest on the rest."""
    if k < 2:
        raise MetricError("k must be >= 2")
    folds = []
    for seed in seeds:
        try:
            parts = stratified_folds(data.y, k, seed, data.groups)
        except SplitError as exc:
            raise MetricError(f"cross-validation: {exc}") from exc
        for f, test_rows in enumerate(parts):
            mask = np.ones(len(data), dtype=bool)
            mask[test_rows] = False
            train, test = data.take(np.nonzero(mask)[0]), data.take(test_rows)
            fold_seed = int(np.random.SeedSequence([int(seed), f]).generate_state(1)[0])
            model = train_forest(train, params.replace(seed=fold_seed), n_jobs=n_jobs)
            p_test = model.predict_crash(test.X)
            p_train = model.predict_crash(train.X)
            folds.append(
                {
                    "seed": int(seed),
                    "fold": f,
                    "n_train": len(train),
                    "n_test": len(test),
                    "auc": roc_auc(p_test, test.y),
                    "accuracy": accuracy_score((p_test >= 0.5).astype(np.int64), test.y),
                    "train_accuracy": accuracy_score((p_train >= 0.5).astype(np.int64), train.y),
                }
            )
    summary = {m: MetricSummary.of([r[m] for r in folds]) for m in ("auc", "accuracy")}
    return CVReport(folds, summary)
