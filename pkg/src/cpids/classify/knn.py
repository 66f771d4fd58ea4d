"""k-nearest-neighbours voting classifier."""

from __future__ import annotations

import numpy as np

DISTANCE_FLOOR = 1e-12


def pairwise_distances(A, B, metric: str = "euclidean") -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if metric == "manhattan":
        return np.abs(A[:, None, :] - B[None, :, :]).sum(axis=2)
    if metric == "euclidean":
        sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
        return np.sqrt(np.maximum(sq, 0.0))
    raise ValueError(f"unknown metric {metric!r}")


def nearest(A, B, k: int, metric: str = "euclidean", chunk: int = 256, exclude_self: bool = False):
    """Indices and distances of the ``k`` nearest rows of ``B`` for each row of ``A``.

    Equal distances are ordered by row index. With ``exclude_self`` (``A is B``)
    each row's own index is skipped.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    # keep manhattan's 3-d broadcast bounded
    if metric == "manhattan":
        chunk = max(1, min(chunk, int(2e7 // max(1, B.shape[0] * max(1, B.shape[1])))))
    idx_out = np.empty((len(A), k), dtype=np.int64)
    dist_out = np.empty((len(A), k))
    for start in range(0, len(A), chunk):
        D = pairwise_distances(A[start:start + chunk], B, metric)
        if exclude_self:
            rows = np.arange(D.shape[0])
            D[rows, rows + start] = np.inf
        order = np.argsort(D, axis=1, kind="stable")[:, :k]
        idx_out[start:start + chunk] = order
        dist_out[start:start + chunk] = np.take_along_axis(D, order, axis=1)
    return idx_out, dist_out


class KNeighbors:
    def __init__(self, n_neighbors: int = 5, metric: str = "euclidean", weights: str = "uniform"):
        self.n_neighbors = n_neighbors
        self.metric = metric
        self.weights = weights

    def fit(self, X, y, n_classes: int) -> "KNeighbors":
        self.X_ = np.asarray(X, dtype=np.float64).copy()
        self.y_ = np.asarray(y, dtype=np.int64).copy()
        self.n_classes_ = n_classes
        return self

    def predict_scores(self, X) -> np.ndarray:
        idx, dist = nearest(X, self.X_, self.n_neighbors, self.metric)
        if self.weights == "distance":
            w = 1.0 / np.maximum(dist, DISTANCE_FLOOR)
        else:
            w = np.ones_like(dist)
        scores = np.zeros((len(idx), self.n_classes_))
        np.add.at(scores, (np.repeat(np.arange(len(idx)), idx.shape[1]), self.y_[idx].ravel()), w.ravel())
        return scores / scores.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_scores(X), axis=1)
