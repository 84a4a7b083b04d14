"""Seeded bagged regression trees for estimating unmeasured transfer scores.

Trees are grown to purity (no depth cap, leaf minimum of one sample) on
bootstrap resamples of size n, choosing at every node the squared-error-optimal
split over all features. The only randomness is the bootstrap, so a forest is
fully determined by its seed. Predictions average leaf means and therefore
stay within the training-label range.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import spearmanr

from .errors import FitError
from .parallel import ordered_map

DEFAULT_N_TREES = 300


@dataclass(frozen=True)
class RegressionTree:
    """Array-encoded binary tree: feature index (-1 marks a leaf), split
    threshold, child pointers, and per-node mean label."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            feat = self.feature[node]
            internal = np.nonzero(feat >= 0)[0]
            if internal.size == 0:
                return self.value[node]
            cur = node[internal]
            go_left = X[internal, self.feature[cur]] <= self.threshold[cur]
            node[internal] = np.where(go_left, self.left[cur], self.right[cur])


def _best_split(X: np.ndarray, y: np.ndarray) -> tuple[int, float] | None:
    """Squared-error-optimal (feature, threshold) over all features, or None.

    Maximizes sum_left^2/n_left + sum_right^2/n_right, which is equivalent to
    minimizing the post-split SSE. Ties break to the earliest sorted position,
    then the lowest feature index; thresholds sit between adjacent distinct
    feature values.
    """
    n = len(y)
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    ys = y[order]
    csum = np.cumsum(ys, axis=0)
    left_sum = csum[:-1]
    right_sum = csum[-1] - left_sum
    counts = np.arange(1, n, dtype=float)[:, None]
    score = left_sum**2 / counts + right_sum**2 / (n - counts)
    score[xs[1:] <= xs[:-1]] = -np.inf
    flat = int(np.argmax(score))
    pos, feat = divmod(flat, X.shape[1])
    if not np.isfinite(score[pos, feat]):
        return None
    threshold = 0.5 * (xs[pos, feat] + xs[pos + 1, feat])
    return feat, float(threshold)


def _grow_tree(X: np.ndarray, y: np.ndarray) -> RegressionTree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node(idx: np.ndarray) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        return node

    root_idx = np.arange(len(y))
    stack = [(new_node(root_idx), root_idx)]
    while stack:
        node, idx = stack.pop()
        yy = y[idx]
        if len(idx) < 2 or np.all(yy == yy[0]):
            continue
        found = _best_split(X[idx], yy)
        if found is None:
            continue
        feat, thr = found
        go_left = X[idx, feat] <= thr
        feature[node] = feat
        threshold[node] = thr
        left_idx = idx[go_left]
        right_idx = idx[~go_left]
        left[node] = new_node(left_idx)
        right[node] = new_node(right_idx)
        stack.append((left[node], left_idx))
        stack.append((right[node], right_idx))
    return RegressionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=float),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=float),
    )


@dataclass(frozen=True)
class Forest:
    trees: tuple[RegressionTree, ...]
    n_trees: int
    seed: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        total = np.zeros(len(X))
        for tree in self.trees:
            total += tree.predict(X)
        return total / self.n_trees


def rf_train(
    features: np.ndarray,
    labels: Sequence[float],
    n_trees: int = DEFAULT_N_TREES,
    seed: int = 0,
) -> Forest:
    """Train a bagged forest; deterministic for a fixed seed."""
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise FitError("features must be (n_samples, n_features) matching labels")
    if len(y) < 2:
        raise FitError(f"forest training needs at least 2 samples, got {len(y)}")
    if n_trees < 1:
        raise FitError("n_trees must be at least 1")
    n = len(y)
    children = np.random.SeedSequence(seed).spawn(n_trees)

    def grow_one(child) -> RegressionTree:
        idx = np.random.default_rng(child).integers(0, n, size=n)
        return _grow_tree(X[idx], y[idx])

    trees = ordered_map(grow_one, children)
    return Forest(trees=tuple(trees), n_trees=n_trees, seed=seed)


def _fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def cross_validate(
    features: np.ndarray,
    labels: Sequence[float],
    k: int = 5,
    seed: int = 0,
    n_trees: int = DEFAULT_N_TREES,
) -> tuple[float, float]:
    """k-fold cross-validation of the forest: pooled out-of-fold (R2, Spearman rho).

    Folds are contiguous blocks of a seeded permutation; Spearman uses average
    ranks on ties.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    n = len(y)
    if k < 2:
        raise FitError("cross_validate needs k >= 2")
    if k > n:
        raise FitError(f"cannot make {k} folds from {n} samples")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, k)
    pooled = np.empty(n)
    for i, test_idx in enumerate(folds):
        train_idx = np.concatenate([f for j, f in enumerate(folds) if j != i])
        forest = rf_train(X[train_idx], y[train_idx], n_trees=n_trees, seed=_fold_seed(seed, i))
        pooled[test_idx] = forest.predict(X[test_idx])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        raise FitError("cross_validate is undefined for constant labels")
    r2 = 1.0 - float(np.sum((y - pooled) ** 2)) / ss_tot
    rho = float(spearmanr(y, pooled).statistic)
    return r2, rho
