"""CART decision trees with Gini impurity and a bagged random forest."""

from __future__ import annotations

import math

import numpy as np


def _resolve_max_features(max_features, n_features: int) -> int:
    if max_features is None:
        return n_features
    if max_features == "sqrt":
        return max(1, int(math.sqrt(n_features)))
    if max_features == "log2":
        return max(1, int(math.log2(n_features)))
    if isinstance(max_features, float) and max_features <= 1.0:
        return max(1, int(max_features * n_features))
    return max(1, min(int(max_features), n_features))


def _best_split(X, Y, idx, features, max_features):
    """Best (impurity, feature, threshold) over up to ``max_features``
    non-constant features, visited in the given random order."""
    n = len(idx)
    Yn = Y[idx]
    total = Yn.sum(axis=0)
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    best = (np.inf, -1, 0.0)
    visited = 0
    for f in features:
        x = X[idx, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        visited += 1
        cl = np.cumsum(Yn[order], axis=0)[:-1]
        cr = total - cl
        # n * weighted child gini = nl - sum(cl^2)/nl + nr - sum(cr^2)/nr
        score = n - (cl * cl).sum(axis=1) / nl - (cr * cr).sum(axis=1) / nr
        score[~valid] = np.inf
        i = int(np.argmin(score))
        if score[i] < best[0]:
            thr = 0.5 * (xs[i] + xs[i + 1])
            if not thr < xs[i + 1]:
                thr = xs[i]
            best = (score[i], int(f), float(thr))
        if visited >= max_features:
            break
    return best


class DecisionTree:
    """Unpruned CART tree; leaves hold class counts of their training samples."""

    def __init__(self, max_features=None, min_samples_leaf: int = 1, rng=None):
        self.max_features = max_features
        self.min_samples_leaf = min_samples_leaf
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int, sample_idx=None) -> "DecisionTree":
        X = np.asarray(X, dtype=np.float64)
        n, m = X.shape
        Y = np.zeros((n, n_classes))
        Y[np.arange(n), y] = 1.0
        k = _resolve_max_features(self.max_features, m)
        feature, threshold, left, right, counts = [], [], [], [], []

        def new_node(idx):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            counts.append(Y[idx].sum(axis=0))
            return len(feature) - 1

        root_idx = np.arange(n) if sample_idx is None else np.asarray(sample_idx)
        stack = [(new_node(root_idx), root_idx)]
        while stack:
            node, idx = stack.pop()
            c = counts[node]
            if len(idx) < 2 * self.min_samples_leaf or np.count_nonzero(c) <= 1:
                continue
            _, f, thr = _best_split(X, Y, idx, self.rng.permutation(m), k)
            if f < 0:
                continue
            go_left = X[idx, f] <= thr
            li, ri = idx[go_left], idx[~go_left]
            if len(li) < self.min_samples_leaf or len(ri) < self.min_samples_leaf:
                continue
            feature[node], threshold[node] = f, thr
            left[node] = new_node(li)
            right[node] = new_node(ri)
            stack.append((left[node], li))
            stack.append((right[node], ri))

        self.feature_ = np.asarray(feature, dtype=np.int64)
        self.threshold_ = np.asarray(threshold)
        self.left_ = np.asarray(left, dtype=np.int64)
        self.right_ = np.asarray(right, dtype=np.int64)
        self.counts_ = np.vstack(counts)
        self.leaf_label_ = np.argmax(self.counts_, axis=1)
        self.n_features_ = m
        return self

    @property
    def n_nodes(self) -> int:
        return len(self.feature_)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature_[node] >= 0)
        while len(active):
            nd = node[active]
            go_left = X[active, self.feature_[nd]] <= self.threshold_[nd]
            node[active] = np.where(go_left, self.left_[nd], self.right_[nd])
            active = active[self.feature_[node[active]] >= 0]
        return node

    def predict(self, X) -> np.ndarray:
        return self.leaf_label_[self.apply(X)]


class RandomForest:
    """Bootstrap-aggregated trees with per-split feature subsampling.

    Scores are vote shares; ties go to the lowest class index.
    """

    def __init__(self, n_estimators: int = 100, max_features="sqrt", min_samples_leaf: int = 1,
                 bootstrap: bool = True, seed: int = 0):
        self.n_estimators = n_estimators
        self.max_features = max_features
        self.min_samples_leaf = min_samples_leaf
        self.bootstrap = bootstrap
        self.seed = seed

    def fit(self, X, y, n_classes: int) -> "RandomForest":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        rng = np.random.default_rng(self.seed)
        n = len(X)
        self.n_classes_ = n_classes
        self.trees_ = []
        self.samples_ = []
        for tree_rng in rng.spawn(self.n_estimators):
            sample = np.sort(tree_rng.integers(0, n, n)) if self.bootstrap else np.arange(n)
            tree = DecisionTree(self.max_features, self.min_samples_leaf, tree_rng)
            tree.fit(X, y, n_classes, sample_idx=sample)
            self.trees_.append(tree)
            self.samples_.append(sample)
        return self

    def predict_scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        votes = np.zeros((len(X), self.n_classes_))
        rows = np.arange(len(X))
        for tree in self.trees_:
            votes[rows, tree.predict(X)] += 1.0
        return votes / len(self.trees_)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_scores(X), axis=1)
