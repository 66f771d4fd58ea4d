import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.decomposition import PCA as SkPCA

from cpids.errors import DegenerateColumn, TooFewMinority
from cpids.transform import (
    ResamplerSpec, apply_pca, fit_apply_scaler, fit_pca, fit_scaler, instance_hardness_threshold,
    inverse_pca, minka_log_evidence, remove_tomek, resample, smote, tomek_links,
)
from oracles import collinearity_residual


# -- scaling -------------------------------------------------------------------

def test_minmax_hand_values():
    tr, te = fit_apply_scaler(np.array([[0.0], [5.0], [10.0]]), np.array([[20.0]]), "minmax01")
    assert tr.ravel().tolist() == [0.0, 0.5, 1.0]
    assert te.ravel().tolist() == [2.0]


def test_minmax_degenerate_column():
    with pytest.raises(DegenerateColumn):
        fit_scaler(np.array([[1.0, 2.0], [1.0, 3.0]]), "minmax01")
    s = fit_scaler(np.array([[1.0, 2.0], [1.0, 3.0]]), "minmax01", degenerate="unit")
    assert np.all(np.isfinite(s.transform([[1.0, 2.5]])))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(3, 30), st.integers(1, 5)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_scaler_canonical_ranges(X):
    spread = X.max(axis=0) - X.min(axis=0)
    live = spread > 1e-6 * np.maximum(1.0, np.abs(X).max(axis=0))
    Z = fit_scaler(X, "standardize").transform(X)
    assert np.allclose(Z.mean(axis=0), 0, atol=1e-9)
    assert np.allclose(Z[:, live].std(axis=0), 1, atol=1e-9)
    M = fit_scaler(X, "minmax01", degenerate="unit").transform(X)
    assert M.min() >= -1e-12 and M.max() <= 1 + 1e-12
    A = fit_scaler(X, "maxabs").transform(X)
    assert np.abs(A).max() <= 1 + 1e-12
    assert np.array_equal(fit_scaler(X, "none").transform(X), X)


# -- PCA -----------------------------------------------------------------------

def factor_data(rng, n=400, d=12, k=3, noise=0.05):
    Z = rng.normal(size=(n, k)) * np.array([5.0, 3.0, 2.0][:k])
    W = np.linalg.qr(rng.normal(size=(d, k)))[0].T
    return Z @ W + noise * rng.normal(size=(n, d))


def test_orthonormal_components(rng):
    m = fit_pca(factor_data(rng))
    C = m.components
    assert np.max(np.abs(C @ C.T - np.eye(m.n_components))) < 1e-8


def test_recovers_three_factors(rng):
    m = fit_pca(factor_data(rng))
    assert abs(m.n_components - 3) <= 1


@pytest.mark.parametrize("seed", range(5))
def test_selection_matches_reference_mle(seed):
    rng = np.random.default_rng(seed)
    X = factor_data(rng, n=200, d=8, k=int(rng.integers(1, 4)), noise=0.3)
    ref = SkPCA(n_components="mle", svd_solver="full").fit(X)
    assert fit_pca(X).n_components == ref.n_components_


def test_evidence_prefers_true_dimension(rng):
    X = factor_data(rng, noise=0.01)
    m = fit_pca(X)
    ev = [minka_log_evidence(m.spectrum, k, len(X)) for k in range(1, 8)]
    assert int(np.argmax(ev)) + 1 == m.n_components


def test_full_rank_round_trip(rng):
    X = rng.normal(size=(50, 6))
    m = fit_pca(X, n_components=6)
    assert np.max(np.abs(inverse_pca(m, apply_pca(m, X)) - X)) < 1e-8


def test_identity_covariance_two_columns(rng):
    X = rng.normal(size=(500, 2))
    m = fit_pca(X, n_components=2)
    assert np.allclose(inverse_pca(m, apply_pca(m, X)), X, atol=1e-10)


def test_mean_projects_to_zero(rng):
    X = factor_data(rng)
    m = fit_pca(X)
    assert np.allclose(apply_pca(m, X.mean(axis=0, keepdims=True)), 0, atol=1e-10)


def test_rank_k_reconstruction(rng):
    Z = rng.normal(size=(100, 2))
    W = rng.normal(size=(2, 7))
    X = Z @ W + 3.0
    m = fit_pca(X, n_components=2)
    assert np.allclose(inverse_pca(m, apply_pca(m, X)), X, atol=1e-8)


def test_duplicated_column_caps_rank(rng):
    X = rng.normal(size=(60, 4))
    X = np.column_stack([X, X[:, 0]])
    m = fit_pca(X)
    assert m.rank == 4 and m.rank_capped
    assert m.n_components <= 4


def test_thin_matrix(rng):
    m = fit_pca(rng.normal(size=(5, 20)))
    assert 1 <= m.n_components <= 4


# -- SMOTE / Borderline-SMOTE ----------------------------------------------------

def imbalanced(rng, sizes=(100, 10), sep=3.0):
    X = np.vstack([rng.normal(loc=c * sep, size=(n, 2)) for c, n in enumerate(sizes)])
    y = np.concatenate([np.full(n, c) for c, n in enumerate(sizes)])
    return X, y


def test_smote_balances_to_majority(rng):
    X, y = imbalanced(rng)
    Xr, yr = smote(X, y, 5, seed=1)
    assert np.bincount(yr).tolist() == [100, 100]
    assert np.array_equal(Xr[: len(X)], X) and np.array_equal(yr[: len(y)], y)


@pytest.mark.parametrize("borderline", [False, True])
def test_synthetic_points_collinear_with_same_class_pair(rng, borderline):
    X, y = imbalanced(rng, (60, 12, 9), sep=1.5)
    Xr, yr = smote(X, y, 5, seed=2, borderline=borderline)
    assert np.bincount(yr).tolist() == [60, 60, 60]
    for p, c in zip(Xr[len(X):], yr[len(X):]):
        pool = X[y == c]
        best = min(
            (collinearity_residual(p, a, b) for i, a in enumerate(pool) for b in pool[i + 1:]),
            key=lambda r: r[0],
        )
        assert best[0] < 1e-9
        assert 0.0 < best[1] < 1.0


def test_smote_too_few_minority(rng):
    X, y = imbalanced(rng, (50, 4))
    with pytest.raises(TooFewMinority):
        smote(X, y, 5)


def test_smote_reproducible(rng):
    X, y = imbalanced(rng)
    a = smote(X, y, 5, seed=7, borderline=True)
    b = smote(X, y, 5, seed=7, borderline=True)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_borderline_seeds_come_from_danger_zone():
    rng = np.random.default_rng(0)
    safe = rng.normal(loc=(-10, 0), scale=0.3, size=(15, 2))
    border = rng.normal(loc=(0, 0), scale=0.3, size=(15, 2))
    X = np.vstack([rng.normal(loc=(0.5, 0), scale=0.5, size=(100, 2)), safe, border])
    y = np.r_[np.zeros(100, int), np.ones(30, int)]
    Xr, _ = smote(X, y, 5, seed=0, borderline=True)
    synth = Xr[len(X):]
    # synthetic minority rows stay with the border cluster, not the safe one
    assert np.mean(synth[:, 0] > -5) > 0.95


# -- Tomek links and IHT -----------------------------------------------------------

def test_tomek_four_point_fixture():
    X = np.array([[0.0], [1.0], [5.0], [6.0]])
    y = np.array([0, 1, 0, 0])
    assert tomek_links(X, y).tolist() == [[0, 1]]
    Xr, yr = remove_tomek(X, y)
    assert Xr.ravel().tolist() == [1.0, 5.0, 6.0]
    assert yr.tolist() == [1, 0, 0]


def test_tomek_ignores_same_class_pairs():
    X = np.array([[0.0], [0.5], [10.0], [10.5]])
    y = np.array([0, 0, 1, 1])
    assert len(tomek_links(X, y)) == 0


def test_iht_undersamples_to_minority(rng):
    X, y = imbalanced(rng, (120, 20, 30), sep=2.0)
    Xr, yr = instance_hardness_threshold(X, y, n_estimators=20, n_folds=3, seed=0)
    counts = np.bincount(yr)
    assert counts.tolist() == [20, 20, 20]
    rows = {tuple(r) for r in X}
    assert all(tuple(r) in rows for r in Xr)


def test_resample_dispatch_and_audit(rng):
    from cpids.audit import FitAudit, row_digests
    X, y = imbalanced(rng)
    audit = FitAudit()
    Xr, yr = resample(X, y, ResamplerSpec("smote"), seed=0, audit=audit)
    assert len(Xr) == 200
    assert audit.rows["resample:smote"] == row_digests(X)
    Xn, yn = resample(X, y, ResamplerSpec("none"))
    assert np.array_equal(Xn, X)
