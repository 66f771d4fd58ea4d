"""Soft-margin kernel SVM trained by sequential minimal optimisation.

The binary solver follows the second-order working-set selection used by
LIBSVM. For labels ``y`` in {+1, -1} it minimises

    0.5 * a' Q a - sum(a)   subject to   0 <= a <= C,  y'a = 0,

with ``Q[i, j] = y[i] y[j] K(x_i, x_j)``, and stops once the maximal KKT
violation ``m(a) - M(a)`` drops below ``tol``. Multi-class problems are split
one-vs-one and decided by majority vote, ties to the lowest class index.
"""

from __future__ import annotations

import warnings
from itertools import combinations

import numpy as np

TAU = 1e-12


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def kkt_violation(alpha, y, grad, C) -> float:
    """``m(a) - M(a)``: the gap between the most violating up/low pair."""
    yg = -y * grad
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
    if not up.any() or not low.any():
        return 0.0
    return float(yg[up].max() - yg[low].min())


def smo(K: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-3, max_iter: int = 1_000_000):
    """Solve the binary dual for a precomputed kernel matrix.

    Returns ``(alpha, rho, n_iter, violation)``; the decision function is
    ``sum_i alpha_i y_i K(x_i, x) - rho``.
    """
    n = len(y)
    y = np.asarray(y, dtype=np.float64)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = np.diag(K).copy()
    it = 0
    for it in range(1, max_iter + 1):
        yg = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        up_idx = np.flatnonzero(up)
        i = up_idx[np.argmax(yg[up_idx])]
        m = yg[i]
        low_idx = np.flatnonzero(low)
        if len(low_idx) == 0 or m - yg[low_idx].min() < tol:
            break
        cand = low_idx[yg[low_idx] < m]
        b = m - yg[cand]
        a = diag[i] + diag[cand] - 2.0 * K[i, cand]
        a = np.where(a > 0, a, TAU)
        j = cand[np.argmin(-(b * b) / a)]

        ai_old, aj_old = alpha[i], alpha[j]
        Kij = K[i, j]
        if y[i] != y[j]:
            quad = diag[i] + diag[j] + 2.0 * y[i] * y[j] * Kij
            quad = quad if quad > 0 else TAU
            delta = (-grad[i] - grad[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            quad = diag[i] + diag[j] - 2.0 * y[i] * y[j] * Kij
            quad = quad if quad > 0 else TAU
            delta = (grad[i] - grad[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        dai, daj = ai - ai_old, aj - aj_old
        # grad = Q a - 1, Q[:, i] = y * y[i] * K[:, i]
        grad += y * (y[i] * dai * K[:, i] + y[j] * daj * K[:, j])
    else:
        warnings.warn(f"SMO hit max_iter={max_iter} before reaching tol={tol}", RuntimeWarning, stacklevel=2)

    return alpha, _rho(alpha, y, grad, C), it, kkt_violation(alpha, y, grad, C)


def _rho(alpha, y, grad, C) -> float:
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(yg[free].mean())
    at_ub = alpha >= C
    at_lb = alpha <= 0
    ub_mask = (at_ub & (y < 0)) | (at_lb & (y > 0))
    lb_mask = (at_ub & (y > 0)) | (at_lb & (y < 0))
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
    if np.isinf(ub) or np.isinf(lb):
        return float(ub if np.isfinite(ub) else lb if np.isfinite(lb) else 0.0)
    return float((ub + lb) / 2)


class BinarySVC:
    def __init__(self, C: float = 1.0, gamma: float = 1.0, tol: float = 1e-3, max_iter: int = 1_000_000):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y) -> "BinarySVC":
        """``y`` in {+1, -1}."""
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        K = rbf_kernel(X, X, self.gamma)
        alpha, rho, n_iter, viol = smo(K, y, self.C, self.tol, self.max_iter)
        sv = alpha > 0
        self.support_vectors_ = X[sv]
        self.dual_coef_ = (alpha * y)[sv]
        self.alpha_ = alpha
        self.y_ = y
        self.rho_ = rho
        self.n_iter_ = n_iter
        self.kkt_violation_ = viol
        return self

    def decision_function(self, X) -> np.ndarray:
        if len(self.support_vectors_) == 0:
            return np.full(len(X), -self.rho_)
        return rbf_kernel(X, self.support_vectors_, self.gamma) @ self.dual_coef_ - self.rho_


class SVC:
    """One-vs-one multi-class RBF SVM."""

    def __init__(self, C: float = 1.0, gamma: float | None = None, tol: float = 1e-3,
                 max_iter: int = 1_000_000):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y, n_classes: int) -> "SVC":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        gamma = self.gamma
        if gamma is None:
            var = X.var()
            gamma = 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        self.gamma_ = float(gamma)
        self.n_classes_ = n_classes
        present = np.unique(y)
        self.machines_ = {}
        for a, b in combinations(present, 2):
            mask = (y == a) | (y == b)
            yy = np.where(y[mask] == a, 1.0, -1.0)
            self.machines_[(int(a), int(b))] = BinarySVC(self.C, self.gamma_, self.tol, self.max_iter).fit(X[mask], yy)
        self.present_ = present
        return self

    @property
    def kkt_violation_(self) -> float:
        return max((m.kkt_violation_ for m in self.machines_.values()), default=0.0)

    def votes(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        V = np.zeros((len(X), self.n_classes_))
        if len(X) == 0:
            return V
        if len(self.present_) == 1:
            V[:, self.present_[0]] = 1.0
            return V
        for (a, b), m in self.machines_.items():
            pos = m.decision_function(X) > 0
            V[pos, a] += 1
            V[~pos, b] += 1
        return V

    def predict_scores(self, X) -> np.ndarray:
        V = self.votes(X)
        if len(V) == 0:
            return V
        return V / V.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.votes(X), axis=1)
