"""CART trees grown on Gini impurity and a bagged forest over them.

Trees are stored as flat node arrays (feature, threshold, left, right,
counts); a leaf has ``feature == -1``. Rows with ``x[feature] < threshold``
go left. The forest's crash probability is the mean of per-tree leaf
fractions.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import _kernels
from .errors import ModelFormatError, PredictionError, TrainingError
from .io import atomic_write_text
from .types import ClassProbabilities, DrivingContext, LabeledDataset, canonical_json

MODEL_FORMAT = "crashscore-forest"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 5
    features_per_split: int | str = "sqrt"
    seed: int = 0

    def __post_init__(self):
        if int(self.n_estimators) < 1:
            raise TrainingError(f"n_estimators must be >= 1, got {self.n_estimators}")
        if int(self.min_samples_leaf) < 1:
            raise TrainingError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.max_depth is not None and int(self.max_depth) < 0:
            raise TrainingError(f"max_depth must be >= 0 or None, got {self.max_depth}")
        fps = self.features_per_split
        if isinstance(fps, str):
            if fps != "sqrt":
                raise TrainingError(f"features_per_split must be an integer or 'sqrt', got {fps!r}")
        elif int(fps) < 1:
            raise TrainingError(f"features_per_split must be >= 1, got {fps}")

    def mtry(self, n_features: int) -> int:
        if self.features_per_split == "sqrt":
            return max(1, int(math.isqrt(n_features)))
        return min(int(self.features_per_split), n_features)

    def replace(self, **changes: Any) -> "ForestParams":
        doc = self.to_dict()
        doc.update(changes)
        return ForestParams.from_dict(doc)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_estimators": int(self.n_estimators),
            "max_depth": None if self.max_depth is None else int(self.max_depth),
            "min_samples_leaf": int(self.min_samples_leaf),
            "features_per_split": self.features_per_split,
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ForestParams":
        return cls(**{k: doc[k] for k in ("n_estimators", "max_depth", "min_samples_leaf", "features_per_split", "seed") if k in doc})


def _readonly(a: np.ndarray, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, 2): safe, crash

    def __post_init__(self):
        object.__setattr__(self, "feature", _readonly(self.feature, np.int64))
        object.__setattr__(self, "threshold", _readonly(self.threshold, np.float64))
        object.__setattr__(self, "left", _readonly(self.left, np.int64))
        object.__setattr__(self, "right", _readonly(self.right, np.int64))
        object.__setattr__(self, "counts", _readonly(np.reshape(self.counts, (-1, 2)), np.int64))
        n = self.feature.shape[0]
        if n == 0 or any(a.shape[0] != n for a in (self.threshold, self.left, self.right, self.counts)):
            raise ModelFormatError("tree node arrays are empty or of unequal length")

    @classmethod
    def leaf(cls, n_safe: int, n_crash: int) -> "Tree":
        return cls([-1], [0.0], [-1], [-1], [[n_safe, n_crash]])

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    @cached_property
    def value(self) -> np.ndarray:
        """Crash fraction at every node (0 for an empty node)."""
        tot = self.counts.sum(axis=1)
        v = np.where(tot > 0, self.counts[:, 1] / np.maximum(tot, 1), 0.0)
        v.setflags(write=False)
        return v

    @cached_property
    def depth(self) -> int:
        d = np.zeros(self.n_nodes, np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[i] + 1
                d[self.right[i]] = d[i] + 1
        return int(d.max())

    def validate(self, n_features: int) -> None:
        n = self.n_nodes
        internal = self.feature >= 0
        if np.any(self.feature >= n_features) or np.any(self.feature < -1):
            raise ModelFormatError("feature index out of range")
        kids = np.concatenate([self.left[internal], self.right[internal]])
        if np.any(kids <= 0) or np.any(kids >= n):
            raise ModelFormatError("child index out of range")
        if np.unique(kids).size != kids.size:
            raise ModelFormatError("node reached from more than one parent")
        if np.any(self.counts < 0):
            raise ModelFormatError("negative class count")
        # children must come after parents so depth/traversal terminate
        parents = np.nonzero(internal)[0]
        if np.any(self.left[parents] <= parents) or np.any(self.right[parents] <= parents):
            raise ModelFormatError("child precedes its parent")
        if not np.all(np.isfinite(self.threshold)):
            raise ModelFormatError("non-finite threshold")

    def predict_crash(self, X: np.ndarray) -> np.ndarray:
        return _PackedTrees.of([self]).predict(np.asarray(X, dtype=np.float64))

    def to_dict(self) -> dict[str, Any]:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "Tree":
        return cls(doc["feature"], doc["threshold"], doc["left"], doc["right"], doc["counts"])


@dataclass(frozen=True, eq=False)
class _PackedTrees:
    """Trees padded to a common node count for the batch kernels."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: np.ndarray

    @classmethod
    def of(cls, trees: Sequence[Tree]) -> "_PackedTrees":
        t, m = len(trees), max(tr.n_nodes for tr in trees)
        feature = np.full((t, m), -1, np.int64)
        threshold = np.zeros((t, m))
        left = np.full((t, m), -1, np.int64)
        right = np.full((t, m), -1, np.int64)
        value = np.zeros((t, m))
        for i, tr in enumerate(trees):
            k = tr.n_nodes
            feature[i, :k] = tr.feature
            threshold[i, :k] = tr.threshold
            left[i, :k] = tr.left
            right[i, :k] = tr.right
            value[i, :k] = tr.value
        depth = np.array([tr.depth for tr in trees], np.int64)
        return cls(feature, threshold, left, right, value, depth)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _kernels.predict(self.feature, self.threshold, self.left, self.right, self.value, np.ascontiguousarray(X))

    def cover(self, X: np.ndarray) -> np.ndarray:
        return _kernels.cover(self.feature, self.threshold, self.left, self.right, np.ascontiguousarray(X))


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple[Tree, ...]
    params: ForestParams
    schema_id: str
    n_features: int
    feature_names: tuple[str, ...] = ()
    training_meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if not self.trees:
            raise TrainingError("a forest needs at least one tree")
        if self.feature_names and len(self.feature_names) != self.n_features:
            raise ModelFormatError("feature_names length differs from n_features")
        for i, tr in enumerate(self.trees):
            try:
                tr.validate(self.n_features)
            except ModelFormatError as exc:
                raise ModelFormatError(f"tree {i}: {exc}") from None

    def __len__(self) -> int:
        return len(self.trees)

    @cached_property
    def packed(self) -> _PackedTrees:
        return _PackedTrees.of(self.trees)

    def check_input(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise PredictionError(f"expected rows of {self.n_features} features, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise PredictionError("input contains non-finite values")
        return np.ascontiguousarray(X)

    def predict_crash(self, X: np.ndarray) -> np.ndarray:
        return self.packed.predict(self.check_input(X))

    def predict_proba(self, context: DrivingContext) -> ClassProbabilities:
        return predict_proba(self, context)

    def with_trees(self, trees: Sequence[Tree]) -> "Forest":
        return Forest(tuple(trees), self.params, self.schema_id, self.n_features, self.feature_names, dict(self.training_meta))

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "schema_id": self.schema_id,
            "n_features": self.n_features,
            "feature_names": list(self.feature_names),
            "params": self.params.to_dict(),
            "training_meta": self.training_meta,
            "trees": [t.to_dict() for t in self.trees],
        }


def _tree_seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, dtype=np.uint64)]


def train_tree(data: LabeledDataset, params: ForestParams, bootstrap_seed: int, bootstrap: bool = True) -> Tree:
    n, p = data.X.shape
    if n == 0:
        raise TrainingError("cannot grow a tree on empty data")
    boot_ss, key_ss = np.random.SeedSequence(bootstrap_seed).spawn(2)
    if bootstrap:
        samples = np.random.default_rng(boot_ss).integers(0, n, size=n).astype(np.int64)
    else:
        samples = np.arange(n, dtype=np.int64)
    min_leaf = int(params.min_samples_leaf)
    keys = np.random.default_rng(key_ss).random((_kernels.node_capacity(n, min_leaf), p))
    max_depth = -1 if params.max_depth is None else int(params.max_depth)
    arrays = _kernels.grow_tree(data.X, data.y, samples, max_depth, min_leaf, params.mtry(p), keys)
    return Tree(*arrays)


def train_forest(data: LabeledDataset, params: ForestParams = ForestParams(), n_jobs: int = 1) -> Forest:
    """Bag ``params.n_estimators`` trees; per-tree seeds are fixed before any tree grows."""
    counts = np.bincount(data.y, minlength=2) if len(data) else np.zeros(2, np.int64)
    if counts.size != 2 or counts[0] == 0 or counts[1] == 0:
        raise TrainingError(f"training data must contain both classes, got counts {counts.tolist()}")
    seeds = _tree_seeds(params.seed, params.n_estimators)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(lambda s: train_tree(data, params, s), seeds))
    else:
        trees = [train_tree(data, params, s) for s in seeds]
    meta = {"seed": int(params.seed), "n_samples": int(len(data)), "class_counts": [int(c) for c in counts]}
    return Forest(tuple(trees), params, data.schema.schema_id, data.X.shape[1], data.schema.names, meta)


def predict_proba(model: Forest, context: DrivingContext) -> ClassProbabilities:
    if context.schema_id != model.schema_id:
        raise PredictionError(f"context schema {context.schema_id!r} does not match model schema {model.schema_id!r}")
    return ClassProbabilities.from_crash(float(model.predict_crash(context.values)[0]))


def predict_crash(model: Forest, X: np.ndarray) -> np.ndarray:
    return model.predict_crash(X)


def save_model(model: Forest, path: str | Path) -> None:
    atomic_write_text(path, canonical_json(model.to_dict()) + "\n")


def model_from_dict(doc: Any) -> Forest:
    if not isinstance(doc, dict):
        raise ModelFormatError("model document is not a JSON object")
    if doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"not a {MODEL_FORMAT} document")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r}, expected {MODEL_VERSION}")
    try:
        params = ForestParams.from_dict(doc["params"])
        n_features = int(doc["n_features"])
        raw_trees = doc["trees"]
        schema_id = str(doc["schema_id"])
        if not isinstance(raw_trees, list) or not raw_trees:
            raise ValueError("trees must be a non-empty list")
    except (KeyError, TypeError, ValueError, TrainingError) as exc:
        raise ModelFormatError(f"malformed model header: {exc}") from exc
    trees = []
    for i, t in enumerate(raw_trees):
        try:
            tree = Tree.from_dict(t)
            tree.validate(n_features)
        except (KeyError, TypeError, ValueError, ModelFormatError) as exc:
            raise ModelFormatError(f"tree {i}: malformed node data: {exc}") from exc
        trees.append(tree)
    return Forest(tuple(trees), params, schema_id, n_features, tuple(doc.get("feature_names", ())), doc.get("training_meta", {}))


def load_model(path: str | Path) -> Forest:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelFormatError(f"cannot read model {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON (truncated?): {exc}") from exc
    return model_from_dict(doc)
