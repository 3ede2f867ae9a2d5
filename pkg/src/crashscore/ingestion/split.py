"""Seeded stratified train/test splits and k-fold partitions.

Splits operate on groups of rows. By default every row is its own group; a
balanced dataset groups each crash with its synthetic safe clone so the two
never straddle a split (the clone shares every unflipped field with its
source, and a deep tree would otherwise match test rows to their partners).
Groups are stratified by their label mix.
"""
from __future__ import annotations

import numpy as np

from ..errors import SplitError
from ..types import LabeledDataset


def _check_classes(y: np.ndarray, min_rows: int) -> None:
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise SplitError("both classes must be present")
    for c, n in zip(classes, counts):
        if n < min_rows:
            raise SplitError(f"class {int(c)} has {n} rows, need at least {min_rows}")


def _strata(y: np.ndarray, groups: np.ndarray | None) -> tuple[np.ndarray, list[np.ndarray]]:
    """Unique group ids, and for each stratum the positions of its groups in that array."""
    if groups is None:
        groups = np.arange(y.size)
    gids, inverse = np.unique(groups, return_inverse=True)
    pos_share = np.bincount(inverse, weights=y.astype(np.float64)) / np.bincount(inverse)
    keys = np.unique(pos_share)
    return inverse, [np.nonzero(pos_share == k)[0] for k in keys]


def _expand(inverse: np.ndarray, chosen: np.ndarray) -> np.ndarray:
    mask = np.zeros(inverse.max() + 1, dtype=bool)
    mask[chosen] = True
    return np.nonzero(mask[inverse])[0]


def stratified_split_indices(
    y: np.ndarray, test_fraction: float, seed: int, groups: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 < test_fraction < 1.0:
        raise SplitError(f"test_fraction must be in (0, 1), got {test_fraction}")
    y = np.asarray(y)
    _check_classes(y, 2)
    rng = np.random.default_rng(seed)
    inverse, strata = _strata(y, groups)
    test = []
    for members in strata:
        if members.size < 2:
            raise SplitError(f"a stratum has {members.size} group(s), need at least 2")
        n_test = int(np.floor(members.size * test_fraction + 0.5))
        n_test = min(max(n_test, 1), members.size - 1)
        test.append(rng.permutation(members)[:n_test])
    test_rows = _expand(inverse, np.concatenate(test))
    train_rows = np.setdiff1d(np.arange(y.size), test_rows, assume_unique=True)
    return train_rows, test_rows


def stratified_split(
    dataset: LabeledDataset, test_fraction: float = 0.2, seed: int = 0
) -> tuple[LabeledDataset, LabeledDataset]:
    tr, te = stratified_split_indices(dataset.y, test_fraction, seed, dataset.groups)
    return dataset.take(tr), dataset.take(te)


def stratified_folds(y: np.ndarray, k: int, seed: int, groups: np.ndarray | None = None) -> list[np.ndarray]:
    """Test-row indices for each of ``k`` stratified folds."""
    if k < 2:
        raise SplitError(f"k must be >= 2, got {k}")
    y = np.asarray(y)
    _check_classes(y, k)
    rng = np.random.default_rng(seed)
    inverse, strata = _strata(y, groups)
    folds: list[list[np.ndarray]] = [[] for _ in range(k)]
    for members in strata:
        for f, part in enumerate(np.array_split(rng.permutation(members), k)):
            folds[f].append(part)
    return [_expand(inverse, np.concatenate(parts)) for parts in folds]
