"""Scaling, PCA with Bayesian dimensionality selection, and class resampling.

Everything here is fitted on training rows only and applied to other rows
with the fitted state. Resamplers never run at inference time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .classify.forest import RandomForest
from .classify.knn import nearest
from .errors import DegenerateColumn, TooFewMinority, ValidationError

SCALER_KINDS = ("standardize", "minmax01", "maxabs", "none")
RESAMPLER_KINDS = ("none", "tomek", "iht", "smote", "borderline_smote")
UNDERSAMPLERS = ("none", "tomek", "iht")
OVERSAMPLERS = ("none", "smote", "borderline_smote")


# -- scaling ------------------------------------------------------------------

@dataclass(frozen=True)
class Scaler:
    kind: str
    offset: np.ndarray
    scale: np.ndarray

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self.kind == "none":
            return X.copy()
        return (X - self.offset) / self.scale


def fit_scaler(train, kind: str = "standardize", degenerate: str = "raise") -> Scaler:
    """Fit per-column statistics.

    Zero-spread columns get unit scale, except under ``minmax01`` with
    ``degenerate="raise"`` where they raise :class:`DegenerateColumn`.
    """
    if kind not in SCALER_KINDS:
        raise ValidationError(f"unknown scaler {kind!r}")
    X = np.asarray(train, dtype=np.float64)
    m = X.shape[1]
    if kind == "none":
        return Scaler(kind, np.zeros(m), np.ones(m))
    # spread negligible next to the magnitude counts as zero (rounding in
    # the mean would otherwise blow a constant column up to +-1)
    flat = (X.max(axis=0) - X.min(axis=0)) <= 1e-12 * np.abs(X).max(axis=0)
    if kind == "standardize":
        offset = X.mean(axis=0)
        scale = np.where(flat, 0.0, X.std(axis=0))
    elif kind == "minmax01":
        offset = X.min(axis=0)
        scale = np.where(flat, 0.0, X.max(axis=0) - offset)
        if degenerate == "raise" and np.any(flat):
            raise DegenerateColumn(f"zero spread in columns {np.flatnonzero(flat)[:10].tolist()}")
    else:
        offset = np.zeros(m)
        scale = np.abs(X).max(axis=0)
    scale = np.where(scale == 0, 1.0, scale)
    return Scaler(kind, offset, scale)


def fit_apply_scaler(train, test, kind: str = "standardize"):
    s = fit_scaler(train, kind)
    return s.transform(train), s.transform(test)


# -- PCA ----------------------------------------------------------------------

@dataclass(frozen=True)
class PcaModel:
    components: np.ndarray        # (k, n_features), orthonormal rows
    variances: np.ndarray         # (k,)
    n_components: int
    mean: np.ndarray
    spectrum: np.ndarray          # every eigenvalue of the sample covariance
    log_evidence: np.ndarray      # evidence per candidate k = 1..len
    rank: int
    rank_capped: bool


def minka_log_evidence(spectrum, k: int, n_samples: int) -> float:
    """Laplace approximation of the PCA model evidence for ``k`` components.

    ``spectrum`` holds the covariance eigenvalues sorted descending.
    """
    lam = np.asarray(spectrum, dtype=np.float64)
    d = len(lam)
    if not 1 <= k < d:
        raise ValueError(f"k must lie in [1, {d - 1}]")
    n = n_samples
    i = np.arange(1, k + 1)
    # log of the uniform prior over the Stiefel manifold
    log_pu = -k * math.log(2.0) + np.sum(gammaln((d - i + 1) / 2.0) - (d - i + 1) / 2.0 * math.log(math.pi))
    log_pl = -n / 2.0 * np.sum(np.log(lam[:k]))
    v = max(np.finfo(float).eps, lam[k:].sum() / (d - k))
    log_pv = -n * (d - k) / 2.0 * math.log(v)
    m = d * k - k * (k + 1) / 2.0
    log_pp = math.log(2.0 * math.pi) * (m + k) / 2.0
    hat = lam.copy()
    hat[k:] = v
    a, b = np.triu_indices(d, 1)
    sel = a < k
    a, b = a[sel], b[sel]
    log_az = np.sum(np.log((lam[a] - lam[b]) * (1.0 / hat[b] - 1.0 / hat[a])) + math.log(n))
    return float(log_pu + log_pl + log_pv + log_pp - log_az / 2.0 - k * math.log(n) / 2.0)


def fit_pca(train, n_components: int | None = None, rank_tol: float | None = None) -> PcaModel:
    """PCA whose component count maximises the model evidence (ties to smaller k).

    Candidate counts are capped at the numerical rank of the centred data.
    Passing ``n_components`` fixes ``k`` instead.
    """
    X = np.asarray(train, dtype=np.float64)
    n, m = X.shape
    mean = X.mean(axis=0)
    Xc = X - mean
    _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    spectrum = s ** 2 / max(n - 1, 1)
    tol = rank_tol if rank_tol is not None else spectrum.max(initial=0.0) * max(n, m) * np.finfo(float).eps
    rank = int(np.sum(spectrum > tol))
    d = len(spectrum)
    capped = rank < d
    evidence = np.full(d, -np.inf)
    if n_components is None:
        hi = min(rank, d - 1)
        for k in range(1, hi + 1):
            evidence[k - 1] = minka_log_evidence(spectrum, k, n)
        k = int(np.argmax(evidence)) + 1 if hi >= 1 else max(rank, 1)
    else:
        k = int(n_components)
    k = max(1, min(k, d))
    comps = Vt[:k]
    # deterministic sign: largest-magnitude loading positive
    signs = np.sign(comps[np.arange(k), np.argmax(np.abs(comps), axis=1)])
    signs[signs == 0] = 1.0
    comps = comps * signs[:, None]
    return PcaModel(comps, spectrum[:k], k, mean, spectrum, evidence, rank, capped)


def apply_pca(model: PcaModel, rows) -> np.ndarray:
    return (np.asarray(rows, dtype=np.float64) - model.mean) @ model.components.T


def inverse_pca(model: PcaModel, projected) -> np.ndarray:
    return np.asarray(projected, dtype=np.float64) @ model.components + model.mean


# -- resampling ---------------------------------------------------------------

@dataclass(frozen=True)
class ResamplerSpec:
    kind: str = "none"
    k_neighbors: int = 5
    m_neighbors: int = 10
    iht_estimators: int = 50
    iht_folds: int = 3

    def __post_init__(self):
        if self.kind not in RESAMPLER_KINDS:
            raise ValidationError(f"unknown resampler {self.kind!r}")


def _uniform_open(rng, size) -> np.ndarray:
    """Uniform draws strictly inside (0, 1)."""
    return rng.integers(1, 2 ** 53, size=size) / float(2 ** 53)


def _interpolate(X_class, seeds, k, rng) -> np.ndarray:
    nn_idx, _ = nearest(X_class, X_class, k, exclude_self=True)
    pick = nn_idx[seeds, rng.integers(0, k, size=len(seeds))]
    u = _uniform_open(rng, len(seeds))[:, None]
    return X_class[seeds] + u * (X_class[pick] - X_class[seeds])


def smote(X, y, k_neighbors: int = 5, seed: int = 0, borderline: bool = False, m_neighbors: int = 10):
    """Oversample every class up to the majority count.

    Synthetic rows lie on segments between a seed row and one of its ``k``
    nearest same-class neighbours. With ``borderline`` the seeds are limited
    to the class's *danger* rows: at least half, but not all, of their
    ``m`` nearest neighbours (over all rows) belong to other classes. A class
    without danger rows falls back to using all its rows as seeds.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(y, return_counts=True)
    n_max = counts.max()
    if borderline:
        m = min(m_neighbors, len(X) - 1)
        m_idx, _ = nearest(X, X, m, exclude_self=True)
        n_other = (y[m_idx] != y[:, None]).sum(axis=1)
        danger = (n_other * 2 >= m) & (n_other < m)
    new_X, new_y = [X], [y]
    for c, n_c in zip(classes, counts):
        n_new = n_max - n_c
        if n_new == 0:
            continue
        if n_c <= k_neighbors:
            raise TooFewMinority(f"class {c} has {n_c} rows; need more than k_neighbors={k_neighbors}")
        rows = np.flatnonzero(y == c)
        pool = np.arange(n_c)
        if borderline and danger[rows].any():
            pool = np.flatnonzero(danger[rows])
        seeds = pool[rng.integers(0, len(pool), size=n_new)]
        new_X.append(_interpolate(X[rows], seeds, k_neighbors, rng))
        new_y.append(np.full(n_new, c, dtype=y.dtype))
    return np.vstack(new_X), np.concatenate(new_y)


def tomek_links(X, y) -> np.ndarray:
    """Index pairs ``(i, j)``, ``i < j``, of mutual nearest neighbours with different labels."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if len(X) < 2:
        return np.zeros((0, 2), dtype=np.int64)
    nn, _ = nearest(X, X, 1, exclude_self=True)
    nn = nn[:, 0]
    i = np.arange(len(X))
    mutual = (nn[nn] == i) & (i < nn) & (y != y[nn])
    return np.column_stack([i[mutual], nn[mutual]])


def remove_tomek(X, y):
    """Drop the member of each Tomek link whose class has more rows
    (equal counts: the member with the higher class label)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    size = dict(zip(classes.tolist(), counts.tolist()))
    drop = set()
    for a, b in tomek_links(X, y):
        ka, kb = (size[y[a].item()], y[a].item()), (size[y[b].item()], y[b].item())
        drop.add(int(a) if ka > kb else int(b))
    keep = np.setdiff1d(np.arange(len(X)), np.fromiter(drop, dtype=np.int64, count=len(drop)))
    return X[keep], y[keep]


def instance_hardness_threshold(X, y, n_estimators: int = 50, n_folds: int = 3, seed: int = 0):
    """Undersample every class down to the minority count, keeping the rows
    an internal random forest finds easiest to classify correctly.

    Hardness is the out-of-fold predicted probability of a row's own class.
    """
    from .partition import stratified_shuffled_folds

    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    y_idx = np.searchsorted(classes, y)
    folds = stratified_shuffled_folds(y_idx, k=max(2, min(n_folds, counts.min())), seed=seed)
    prob = np.zeros(len(X))
    for f, val in enumerate(folds):
        tr = np.setdiff1d(np.arange(len(X)), val)
        rf = RandomForest(n_estimators, "sqrt", seed=seed + f).fit(X[tr], y_idx[tr], len(classes))
        prob[val] = rf.predict_scores(X[val])[np.arange(len(val)), y_idx[val]]
    n_min = counts.min()
    keep = np.zeros(len(X), dtype=bool)
    tie = np.random.default_rng(seed).permutation(len(X))
    for c in range(len(classes)):
        rows = np.flatnonzero(y_idx == c)
        # easiest first; vote shares are coarse, so ties are broken at random
        order = rows[np.lexsort((tie[rows], -prob[rows]))]
        keep[order[:n_min]] = True
    return X[keep], y[keep]


def resample(X, y, spec: ResamplerSpec, seed: int = 0, audit=None):
    """Apply one resampler to training rows."""
    if audit is not None:
        audit.record_rows(f"resample:{spec.kind}", X)
    if spec.kind == "none":
        return np.asarray(X, dtype=np.float64), np.asarray(y)
    if spec.kind == "smote":
        return smote(X, y, spec.k_neighbors, seed)
    if spec.kind == "borderline_smote":
        return smote(X, y, spec.k_neighbors, seed, borderline=True, m_neighbors=spec.m_neighbors)
    if spec.kind == "tomek":
        return remove_tomek(X, y)
    return instance_hardness_threshold(X, y, spec.iht_estimators, spec.iht_folds, seed)
