"""Classifier families behind a common train/predict surface."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch, SingleClass, ValidationError
from .ann import NeuralNet
from .forest import RandomForest
from .knn import KNeighbors
from .svm import SVC

FAMILIES = ("RF", "KNN", "SVM", "ANN")


@dataclass(frozen=True)
class ClassifierSpec:
    family: str
    # RF
    n_estimators: int = 100
    max_features: int | str | None = "sqrt"
    # KNN
    n_neighbors: int = 5
    metric: str = "euclidean"
    weights: str = "uniform"
    # SVM (gamma None -> 1 / (n_features * var(X)))
    C: float = 1.0
    gamma: float | None = None
    tol: float = 1e-3
    # ANN
    hidden_layers: int = 2
    units: int = 100
    activation: str = "relu"
    dropout: float = 0.5
    epochs: int = 500
    batch_size: int = 256
    learning_rate: float = 1e-3
    seed: int = 0

    def validate(self) -> "ClassifierSpec":
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown classifier family {self.family!r}")
        positive = {
            "RF": ("n_estimators",),
            "KNN": ("n_neighbors",),
            "SVM": ("C", "tol"),
            "ANN": ("hidden_layers", "units", "epochs", "batch_size", "learning_rate"),
        }[self.family]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValidationError(f"{self.family}: {name} must be positive")
        if self.family == "SVM" and self.gamma is not None and not self.gamma > 0:
            raise ValidationError("SVM: gamma must be positive")
        if self.family == "KNN":
            if self.metric not in ("manhattan", "euclidean"):
                raise ValidationError(f"KNN: unknown metric {self.metric!r}")
            if self.weights not in ("uniform", "distance"):
                raise ValidationError(f"KNN: unknown weighting {self.weights!r}")
        if self.family == "ANN" and not 0 <= self.dropout < 1:
            raise ValidationError("ANN: dropout must lie in [0, 1)")
        return self

    def relevant(self) -> dict:
        """Only the hyperparameters that matter for this family."""
        keys = {
            "RF": ("n_estimators", "max_features"),
            "KNN": ("n_neighbors", "metric", "weights"),
            "SVM": ("C", "gamma"),
            "ANN": ("hidden_layers", "units", "activation", "dropout", "epochs", "batch_size"),
        }[self.family]
        return {"family": self.family, **{k: getattr(self, k) for k in keys}}

    def size(self) -> float:
        """Rough model-size measure used to break grid-search ties."""
        if self.family == "RF":
            return float(self.n_estimators)
        if self.family == "KNN":
            return float(self.n_neighbors)
        if self.family == "SVM":
            return float(self.C)
        return float(self.hidden_layers * self.units)


@dataclass
class TrainedClassifier:
    spec: ClassifierSpec
    classes: np.ndarray
    model: object
    n_features: int
    metadata: dict = field(default_factory=dict)

    def _index_scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            X = X.reshape(-1, self.n_features) if X.size else np.zeros((0, self.n_features))
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        return self.model.predict_scores(X)


def _build(spec: ClassifierSpec):
    if spec.family == "RF":
        return RandomForest(spec.n_estimators, spec.max_features, seed=spec.seed)
    if spec.family == "KNN":
        return KNeighbors(spec.n_neighbors, spec.metric, spec.weights)
    if spec.family == "SVM":
        return SVC(spec.C, spec.gamma, spec.tol)
    return NeuralNet(spec.hidden_layers, spec.units, spec.activation, spec.dropout, spec.epochs,
                     spec.batch_size, spec.learning_rate, spec.seed)


def train(rows, labels, spec: ClassifierSpec) -> TrainedClassifier:
    """Fit one classifier. Labels may be any integers; scores and predictions
    use the sorted set of training labels."""
    spec.validate()
    X = np.asarray(rows, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2 or len(X) != len(y):
        raise DimensionMismatch(f"rows {X.shape} and labels {y.shape} disagree")
    classes = np.unique(y)
    if len(classes) < 2:
        raise SingleClass("training data contains a single class")
    if spec.family == "KNN" and spec.n_neighbors > len(X):
        raise ValidationError(f"KNN: n_neighbors={spec.n_neighbors} exceeds {len(X)} training rows")
    y_idx = np.searchsorted(classes, y)
    model = _build(spec)
    t0 = time.perf_counter()
    model.fit(X, y_idx, len(classes))
    meta = {"seed": spec.seed, "fit_seconds": time.perf_counter() - t0, "n_rows": len(X)}
    if spec.family == "SVM":
        meta["kkt_violation"] = model.kkt_violation_
    return TrainedClassifier(spec, classes, model, X.shape[1], meta)


def predict_scores(model: TrainedClassifier, rows) -> np.ndarray:
    """Per-class scores (columns follow ``model.classes``), each row summing to one."""
    return model._index_scores(rows)


def predict(model: TrainedClassifier, rows) -> np.ndarray:
    scores = model._index_scores(rows)
    if len(scores) == 0:
        return np.zeros(0, dtype=model.classes.dtype)
    return model.classes[np.argmax(scores, axis=1)]


__all__ = ["ClassifierSpec", "TrainedClassifier", "train", "predict", "predict_scores", "FAMILIES"]
