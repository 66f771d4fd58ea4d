import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.svm import SVC as SkSVC

from cpids.classify import ClassifierSpec, predict, predict_scores, train
from cpids.classify.ann import init_params, loss_and_grad
from cpids.classify.svm import kkt_violation, rbf_kernel
from cpids.errors import DimensionMismatch, SingleClass, ValidationError
from oracles import numerical_gradient

FAST = {
    "RF": ClassifierSpec("RF", n_estimators=15, seed=1),
    "KNN": ClassifierSpec("KNN", n_neighbors=3),
    "SVM": ClassifierSpec("SVM", C=10.0, gamma=0.5),
    "ANN": ClassifierSpec("ANN", hidden_layers=1, units=16, dropout=0.0, epochs=200, batch_size=32,
                          learning_rate=1e-2, seed=1),
}

XOR_X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR_Y = np.array([0, 1, 1, 0])


def blobs(rng, n=40):
    X = np.vstack([rng.normal(loc=(-3, -3), scale=0.5, size=(n, 2)),
                   rng.normal(loc=(3, 3), scale=0.5, size=(n, 2))])
    return X, np.r_[np.zeros(n, int), np.ones(n, int)]


@pytest.mark.parametrize("family", list(FAST))
def test_separable_blobs_fit_exactly(rng, family):
    X, y = blobs(rng)
    model = train(X, y, FAST[family])
    assert np.array_equal(predict(model, X), y)


@pytest.mark.parametrize("spec", [
    ClassifierSpec("SVM", C=100.0, gamma=1.0),
    ClassifierSpec("ANN", hidden_layers=1, units=8, activation="tanh", dropout=0.0, epochs=1500,
                   batch_size=4, learning_rate=0.05, seed=3),
    ClassifierSpec("KNN", n_neighbors=1),
], ids=["SVM", "ANN", "KNN1"])
def test_xor_fixture(spec):
    model = train(XOR_X, XOR_Y, spec)
    assert predict(model, XOR_X).tolist() == XOR_Y.tolist()


def test_labels_are_the_training_labels(rng):
    X, y = blobs(rng)
    model = train(X, np.where(y == 0, 3, 7), FAST["KNN"])
    assert set(predict(model, rng.normal(size=(30, 2)) * 4)) <= {3, 7}


# -- KNN ---------------------------------------------------------------------------

def test_knn_equidistant_tie_goes_to_lowest_class():
    X = np.array([[-1.0], [1.0]])
    model = train(X, np.array([2, 1]), ClassifierSpec("KNN", n_neighbors=2))
    assert predict(model, [[0.0]]).tolist() == [1]


def test_knn_three_two_vote_split():
    X = np.array([[0.0], [0.1], [0.2], [0.3], [0.4], [9.0]])
    y = np.array([0, 0, 0, 1, 1, 1])
    model = train(X, y, ClassifierSpec("KNN", n_neighbors=5))
    assert predict_scores(model, [[0.2]])[0].tolist() == pytest.approx([0.6, 0.4], abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["manhattan", "euclidean"]))
def test_one_nn_has_zero_training_error(seed, metric):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 3))
    y = rng.integers(0, 3, 30)
    y[:3] = [0, 1, 2]
    model = train(X, y, ClassifierSpec("KNN", n_neighbors=1, metric=metric))
    assert np.array_equal(predict(model, X), y)


def test_knn_distance_weighting_handles_duplicates():
    X = np.array([[0.0], [0.0], [1.0]])
    model = train(X, np.array([0, 0, 1]), ClassifierSpec("KNN", n_neighbors=3, weights="distance"))
    s = predict_scores(model, [[0.0]])
    assert np.all(np.isfinite(s)) and s[0, 0] > 0.999


# -- RF ------------------------------------------------------------------------------

def test_rf_leaf_labels_are_training_majorities(rng):
    X = rng.normal(size=(120, 4))
    y = (X[:, 0] + 0.5 * rng.normal(size=120) > 0).astype(int) + (X[:, 1] > 1)
    model = train(X, y, ClassifierSpec("RF", n_estimators=8, max_features=2, seed=4)).model
    for tree, sample in zip(model.trees_, model.samples_):
        leaves = tree.apply(X[sample])
        for leaf in np.unique(leaves):
            counts = np.bincount(y[sample][leaves == leaf], minlength=3)
            assert tree.leaf_label_[leaf] == np.argmax(counts)
            assert np.array_equal(counts, tree.counts_[leaf])


def test_rf_pure_region_scores_one(rng):
    X, y = blobs(rng)
    model = train(X, y, FAST["RF"])
    s = predict_scores(model, [[-3.0, -3.0], [3.0, 3.0]])
    assert s.tolist() == [[1.0, 0.0], [0.0, 1.0]]


# -- ANN -----------------------------------------------------------------------------

@pytest.mark.parametrize("activation", ["tanh", "sigmoid", "relu"])
def test_ann_gradient_matches_finite_differences(activation):
    rng = np.random.default_rng(11)
    params = init_params([1, 2, 2], rng)          # 2 + 2 + 4 + 2 = 10 parameters
    params[1] = rng.normal(size=2) * 0.3
    assert sum(p.size for p in params) == 10
    X = rng.normal(size=(7, 1)) + 0.37
    Y = np.eye(2)[rng.integers(0, 2, 7)]
    _, grads = loss_and_grad(params, X, Y, activation)
    flat = np.concatenate([p.ravel() for p in params])
    shapes = [p.shape for p in params]

    def loss_at(v):
        out, i = [], 0
        for s in shapes:
            n = int(np.prod(s))
            out.append(v[i:i + n].reshape(s))
            i += n
        return loss_and_grad(out, X, Y, activation)[0]

    numeric = numerical_gradient(loss_at, flat)
    analytic = np.concatenate([g.ravel() for g in grads])
    rel = np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    assert rel.max() < 1e-4


def test_ann_softmax_rows_sum_to_one(rng):
    X, y = blobs(rng)
    model = train(X, y, FAST["ANN"])
    s = predict_scores(model, rng.normal(size=(25, 2)) * 5)
    assert np.allclose(s.sum(axis=1), 1.0, atol=1e-9)


def test_ann_dropout_only_in_training(rng):
    X, y = blobs(rng)
    model = train(X, y, ClassifierSpec("ANN", hidden_layers=1, units=8, dropout=0.5, epochs=20, seed=2))
    a = predict_scores(model, X)
    assert np.array_equal(a, predict_scores(model, X))


# -- SVM -----------------------------------------------------------------------------

def three_class(rng, n=40):
    centers = [(0, 0), (2.5, 0), (1.2, 2.2)]
    X = np.vstack([rng.normal(loc=c, scale=0.9, size=(n, 2)) for c in centers])
    return X, np.repeat(np.arange(3), n)


def test_svm_dual_feasibility_and_kkt(rng):
    X, y = three_class(rng)
    C = 5.0
    model = train(X, y, ClassifierSpec("SVM", C=C, gamma=0.7))
    assert model.metadata["kkt_violation"] < 1e-3
    for (a, b), m in model.model.machines_.items():
        assert np.all(m.alpha_ >= 0) and np.all(m.alpha_ <= C)
        mask = (y == a) | (y == b)
        K = rbf_kernel(X[mask], X[mask], 0.7)
        grad = (m.y_[:, None] * m.y_[None, :] * K) @ m.alpha_ - 1.0
        assert kkt_violation(m.alpha_, m.y_, grad, C) < 1e-3
        assert abs(m.alpha_ @ m.y_) < 1e-9


@pytest.mark.parametrize("C,gamma", [(1.0, 0.5), (100.0, 2.0), (10000.0, 0.0175)])
def test_svm_agrees_with_reference_solver(rng, C, gamma):
    X, y = three_class(rng)
    Xq = rng.uniform(-2, 4, size=(300, 2))
    ours = predict(train(X, y, ClassifierSpec("SVM", C=C, gamma=gamma)), Xq)
    ref = SkSVC(C=C, gamma=gamma, kernel="rbf", tol=1e-3).fit(X, y).predict(Xq)
    assert np.mean(ours == ref) >= 0.99


def test_svm_scores_are_normalised_votes(rng):
    X, y = three_class(rng)
    s = predict_scores(train(X, y, ClassifierSpec("SVM", C=1.0)), rng.normal(size=(20, 2)))
    assert np.allclose(s.sum(axis=1), 1.0, atol=1e-12)
    assert set(np.round(s.ravel() * 3).astype(int)) <= {0, 1, 2}


# -- shared contract -------------------------------------------------------------------

@pytest.mark.parametrize("family", list(FAST))
def test_scores_sum_to_one_and_empty_rows(rng, family):
    X, y = three_class(rng, 20)
    model = train(X, y, FAST[family])
    s = predict_scores(model, rng.normal(size=(15, 2)))
    assert s.shape == (15, 3)
    assert np.allclose(s.sum(axis=1), 1.0, atol=1e-9)
    assert predict(model, np.zeros((0, 2))).shape == (0,)


@pytest.mark.parametrize("family", list(FAST))
def test_determinism(rng, family):
    X, y = three_class(rng, 20)
    Xq = rng.normal(size=(40, 2))
    a = predict_scores(train(X, y, FAST[family]), Xq)
    b = predict_scores(train(X, y, FAST[family]), Xq)
    assert np.array_equal(a, b)


def test_width_mismatch(rng):
    X, y = blobs(rng)
    model = train(X, y, FAST["KNN"])
    with pytest.raises(DimensionMismatch):
        predict(model, np.zeros((3, 5)))
    with pytest.raises(DimensionMismatch):
        train(X, y[:-1], FAST["KNN"])


def test_single_class_rejected(rng):
    with pytest.raises(SingleClass):
        train(rng.normal(size=(10, 2)), np.zeros(10, int), FAST["RF"])


@pytest.mark.parametrize("bad", [
    ClassifierSpec("XGB"),
    ClassifierSpec("RF", n_estimators=0),
    ClassifierSpec("SVM", C=-1.0),
    ClassifierSpec("SVM", gamma=0.0),
    ClassifierSpec("KNN", metric="cosine"),
    ClassifierSpec("ANN", dropout=1.0),
])
def test_spec_validation(rng, bad):
    with pytest.raises(ValidationError):
        train(rng.normal(size=(10, 2)), np.r_[np.zeros(5, int), np.ones(5, int)], bad)


def test_knn_more_neighbours_than_rows():
    with pytest.raises(ValidationError):
        train(np.zeros((3, 1)) + [[0], [1], [2]], [0, 1, 0], ClassifierSpec("KNN", n_neighbors=5))


def test_metadata_records_seed(rng):
    X, y = blobs(rng)
    model = train(X, y, ClassifierSpec("RF", n_estimators=3, seed=42))
    assert model.metadata["seed"] == 42 and model.metadata["n_rows"] == len(X)
