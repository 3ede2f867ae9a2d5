"""Hand-built trees for oracle comparisons."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from crashscore.forest import Forest, ForestParams, Tree


def forest_of(trees, n_features: int, schema_id: str = "hand") -> Forest:
    return Forest(tuple(trees), ForestParams(n_estimators=len(trees)), schema_id, n_features)


@lru_cache(maxsize=None)
def shapes(depth: int) -> tuple:
    """Every binary tree shape of depth <= ``depth``: None is a leaf, (l, r) a split."""
    if depth == 0:
        return (None,)
    sub = shapes(depth - 1)
    return (None,) + tuple((a, b) for a in sub for b in sub)


def n_splits(shape) -> int:
    return 0 if shape is None else 1 + n_splits(shape[0]) + n_splits(shape[1])


def build(shape, features, thresholds, counts) -> Tree:
    """Lay out ``shape`` in preorder with the given per-split features/thresholds and per-leaf counts."""
    feat, thr, left, right, cnt = [], [], [], [], []
    it_f, it_t, it_c = iter(features), iter(thresholds), iter(counts)

    def emit(node) -> int:
        i = len(feat)
        feat.append(-1)
        thr.append(0.0)
        left.append(-1)
        right.append(-1)
        cnt.append([0, 0])
        if node is None:
            cnt[i] = list(next(it_c))
            return i
        feat[i], thr[i] = next(it_f), next(it_t)
        left[i] = emit(node[0])
        right[i] = emit(node[1])
        cnt[i] = [cnt[left[i]][0] + cnt[right[i]][0], cnt[left[i]][1] + cnt[right[i]][1]]
        return i

    emit(shape)
    return Tree(feat, thr, left, right, cnt)


def random_tree(rng: np.random.Generator, shape, n_features: int) -> Tree:
    k = n_splits(shape)
    leaves = k + 1
    counts = [(int(a), int(b)) for a, b in rng.integers(0, 20, size=(leaves, 2)) + [[1, 0]]]
    return build(shape, rng.integers(0, n_features, size=k).tolist(), rng.random(k).round(3).tolist(), counts)
