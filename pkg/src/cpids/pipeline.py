"""Detection/classification pipelines and grid-search model selection.

A pipeline runs, in this order: scaling, dimensionality reduction,
undersampling, oversampling, classification and (at evaluation time only)
prediction filtering. Every step except classification can be bypassed.
Resampling touches training data only.
"""

from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .classify import ClassifierSpec, TrainedClassifier, predict, train
from .errors import CpidsError, DimensionMismatch, EmptyGrid, ValidationError
from .evaluate import macro_f1
from .partition import stratified_shuffled_folds
from .postfilter import WINDOW, filter_sequence
from .transform import (
    OVERSAMPLERS,
    SCALER_KINDS,
    UNDERSAMPLERS,
    PcaModel,
    ResamplerSpec,
    Scaler,
    apply_pca,
    fit_pca,
    fit_scaler,
    resample,
)

DIM_REDUCTIONS = ("none", "pca")


@dataclass(frozen=True)
class PipelineConfig:
    classifier: ClassifierSpec
    view: str = "fused"
    scaler: str = "standardize"
    dim_reduction: str = "none"
    undersampler: str = "none"
    oversampler: str = "none"
    filter: bool = True
    filter_window: int = WINDOW

    def validate(self) -> "PipelineConfig":
        if self.view not in ("network", "physical", "fused"):
            raise ValidationError(f"unknown view {self.view!r}")
        if self.scaler not in SCALER_KINDS:
            raise ValidationError(f"unknown scaler {self.scaler!r}")
        if self.dim_reduction not in DIM_REDUCTIONS:
            raise ValidationError(f"unknown dimensionality reduction {self.dim_reduction!r}")
        if self.undersampler not in UNDERSAMPLERS:
            raise ValidationError(f"unknown undersampler {self.undersampler!r}")
        if self.oversampler not in OVERSAMPLERS:
            raise ValidationError(f"unknown oversampler {self.oversampler!r}")
        if self.filter_window < 1:
            raise ValidationError("filter window must be at least 1")
        self.classifier.validate()
        if self.scaler == "none" and self.classifier.family == "SVM":
            raise ValidationError("SVM pipelines may not bypass scaling")
        return self

    @property
    def n_steps(self) -> int:
        return sum(s != "none" for s in (self.scaler, self.dim_reduction, self.undersampler, self.oversampler))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["classifier"] = self.classifier.relevant()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        clf = d.pop("classifier")
        if not isinstance(clf, ClassifierSpec):
            clf = classifier_from_dict(clf)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown pipeline keys {sorted(unknown)}")
        return cls(classifier=clf, **d)

    def describe(self) -> str:
        clf = ", ".join(f"{k}={v}" for k, v in self.classifier.relevant().items() if k != "family")
        return (f"{self.classifier.family}[{clf}] scale={self.scaler} dimred={self.dim_reduction} "
                f"under={self.undersampler} over={self.oversampler}")


def classifier_from_dict(d: dict) -> ClassifierSpec:
    known = {f.name for f in fields(ClassifierSpec)}
    unknown = set(d) - known
    if unknown:
        raise ValidationError(f"unknown classifier keys {sorted(unknown)}")
    return ClassifierSpec(**d)


@dataclass
class TrainedPipeline:
    config: PipelineConfig
    scaler: Scaler
    pca: PcaModel | None
    classifier: TrainedClassifier
    n_features: int
    provenance: dict = field(default_factory=dict)

    def stage_outputs(self, rows) -> dict[str, np.ndarray]:
        """Rows as seen by each fitted stage (for leakage audits)."""
        X = _as_matrix(rows, self.n_features)
        out = {"scaler": X}
        Xs = self.scaler.transform(X)
        out["pca"] = Xs
        out["resample"] = apply_pca(self.pca, Xs) if self.pca is not None else Xs
        out["classifier"] = out["resample"]
        return out

    def transform(self, rows) -> np.ndarray:
        X = self.scaler.transform(_as_matrix(rows, self.n_features))
        return apply_pca(self.pca, X) if self.pca is not None else X

    def predict(self, rows) -> np.ndarray:
        return predict(self.classifier, self.transform(rows))

    def predict_filtered(self, rows) -> np.ndarray:
        return filter_sequence(self.predict(rows), self.config.filter_window)


def _as_matrix(rows, width) -> np.ndarray:
    X = np.asarray(rows, dtype=np.float64)
    if X.size == 0:
        return np.zeros((0, width))
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != width:
        raise DimensionMismatch(f"pipeline expects {width} features, got {X.shape[1]}")
    return X


def fit_pipeline(rows, labels, config: PipelineConfig, seed: int = 0, audit=None) -> TrainedPipeline:
    config.validate()
    X = np.asarray(rows, dtype=np.float64)
    y = np.asarray(labels)
    if audit is not None:
        audit.record_rows("scaler", X)
    # per-fold columns can be constant even after pruning; give them unit scale
    scaler = fit_scaler(X, config.scaler, degenerate="unit")
    Xt = scaler.transform(X)
    pca = None
    if config.dim_reduction == "pca":
        if audit is not None:
            audit.record_rows("pca", Xt)
        pca = fit_pca(Xt)
        Xt = apply_pca(pca, Xt)
    if audit is not None:
        audit.record_rows("resample", Xt)
    Xt, yt = resample(Xt, y, ResamplerSpec(config.undersampler), seed)
    Xt, yt = resample(Xt, yt, ResamplerSpec(config.oversampler), seed + 1)
    if audit is not None:
        audit.record_rows("classifier", Xt)
    clf = train(Xt, yt, replace(config.classifier, seed=seed))
    prov = {
        "config": config.to_dict(),
        "seed": seed,
        "n_train_rows": int(len(X)),
        "n_resampled_rows": int(len(Xt)),
        "pca_components": None if pca is None else pca.n_components,
    }
    return TrainedPipeline(config, scaler, pca, clf, X.shape[1], prov)


def predict_pipeline(model: TrainedPipeline, rows) -> np.ndarray:
    """Raw (unfiltered) labels."""
    return model.predict(rows)


# -- grid search ---------------------------------------------------------------

@dataclass
class GridSearchResult:
    candidates: list[PipelineConfig]
    fold_scores: np.ndarray            # (n_candidates, k)
    errors: list[list[str | None]]
    winner_index: int

    @property
    def means(self) -> np.ndarray:
        return self.fold_scores.mean(axis=1)

    @property
    def stds(self) -> np.ndarray:
        return self.fold_scores.std(axis=1)

    @property
    def winner(self) -> PipelineConfig:
        return self.candidates[self.winner_index]

    def rows(self) -> list[list]:
        k = self.fold_scores.shape[1]
        out = [["candidate", "pipeline", "mean_macro_f1", "std"] + [f"fold{i}" for i in range(k)] + ["errors"]]
        for i, c in enumerate(self.candidates):
            errs = "; ".join(e for e in self.errors[i] if e)
            out.append([i, c.describe(), float(self.means[i]), float(self.stds[i])]
                       + [float(s) for s in self.fold_scores[i]] + [errs])
        return out


def _score_fold(args):
    config, X, y, train_idx, val_idx, seed, classes = args
    try:
        model = fit_pipeline(X[train_idx], y[train_idx], config, seed)
        pred = model.predict(X[val_idx])
        return macro_f1(y[val_idx], pred, classes), None
    except (CpidsError, ValueError, np.linalg.LinAlgError) as exc:
        return 0.0, f"{type(exc).__name__}: {exc}"


def select_winner(candidates, means) -> int:
    """Highest mean score; ties go to fewer pipeline steps, then the smaller model,
    then the earlier candidate."""
    best = max(means)
    tied = [i for i, m in enumerate(means) if math.isclose(m, best, rel_tol=0, abs_tol=1e-12)]
    return min(tied, key=lambda i: (candidates[i].n_steps, candidates[i].classifier.size(), i))


def grid_search(rows, labels, candidates, k: int = 5, seed: int = 0, n_jobs: int = 1,
                audit=None) -> GridSearchResult:
    """Score every candidate by macro F1 averaged over ``k`` shuffled stratified folds.

    Every step, resampling included, is refitted inside each fold. A candidate
    that fails on a fold scores 0 for that fold.
    """
    candidates = [c.validate() for c in candidates]
    if not candidates:
        raise EmptyGrid("the candidate grid is empty")
    X = np.asarray(rows, dtype=np.float64)
    y = np.asarray(labels)
    classes = tuple(int(c) for c in np.unique(y))
    folds = stratified_shuffled_folds(y, k, seed)
    all_idx = np.arange(len(X))
    units = []
    for c in candidates:
        for f, val in enumerate(folds):
            units.append((c, X, y, np.setdiff1d(all_idx, val), val, seed + f, classes))
    if audit is not None:
        # audited runs stay in-process so the log sees every fit
        results = []
        for c, X_, y_, tr, val, s, cl in units:
            try:
                model = fit_pipeline(X_[tr], y_[tr], c, s, audit=audit)
                results.append((macro_f1(y_[val], model.predict(X_[val]), cl), None))
            except (CpidsError, ValueError, np.linalg.LinAlgError) as exc:
                results.append((0.0, f"{type(exc).__name__}: {exc}"))
    elif n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_score_fold, units))
    else:
        results = [_score_fold(u) for u in units]
    scores = np.array([r[0] for r in results], dtype=np.float64).reshape(len(candidates), k)
    errors = [[results[i * k + f][1] for f in range(k)] for i in range(len(candidates))]
    for i, errs in enumerate(errors):
        if any(errs):
            warnings.warn(f"candidate {i} ({candidates[i].describe()}) failed on "
                          f"{sum(e is not None for e in errs)} fold(s)", RuntimeWarning, stacklevel=2)
    return GridSearchResult(candidates, scores, errors, select_winner(candidates, scores.mean(axis=1)))


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def expand_grid(grid: dict) -> list[PipelineConfig]:
    """Cartesian product of a grid description.

    Pipeline keys and classifier hyperparameters each take a scalar or a
    list; ``classifier`` may itself be a list of per-family grids.
    """
    grid = dict(grid)
    clf_grids = _as_list(grid.pop("classifier"))
    step_keys = sorted(grid)
    configs = []
    for clf_grid in clf_grids:
        ckeys = sorted(clf_grid)
        clf_specs = [
            classifier_from_dict(dict(zip(ckeys, combo)))
            for combo in itertools.product(*(_as_list(clf_grid[k]) for k in ckeys))
        ]
        for combo in itertools.product(*(_as_list(grid[k]) for k in step_keys)):
            for spec in clf_specs:
                configs.append(PipelineConfig.from_dict({**dict(zip(step_keys, combo)), "classifier": spec}))
    return configs


def reference_pipelines() -> dict[tuple[str, str], PipelineConfig]:
    """Default pipeline per (view, family), fixed to the configurations selected on the public dataset."""
    rf = ClassifierSpec("RF", n_estimators=100, max_features=17)
    svm = ClassifierSpec("SVM", C=10000.0, gamma=0.0175)
    return {
        ("fused", "RF"): PipelineConfig(rf, "fused", "standardize", "none", "none", "smote"),
        ("fused", "KNN"): PipelineConfig(
            ClassifierSpec("KNN", n_neighbors=5, metric="manhattan", weights="distance"),
            "fused", "standardize", "pca", "none", "none"),
        ("fused", "SVM"): PipelineConfig(svm, "fused", "maxabs", "none", "none", "borderline_smote"),
        ("fused", "ANN"): PipelineConfig(
            ClassifierSpec("ANN", hidden_layers=2, units=150, activation="relu", dropout=0.5,
                           epochs=500, batch_size=512),
            "fused", "maxabs", "pca", "none", "borderline_smote"),
        ("network", "RF"): PipelineConfig(rf, "network", "maxabs", "none", "iht", "none"),
        ("network", "KNN"): PipelineConfig(
            ClassifierSpec("KNN", n_neighbors=5, metric="manhattan", weights="uniform"),
            "network", "standardize", "pca", "tomek", "none"),
        ("network", "SVM"): PipelineConfig(svm, "network", "maxabs", "none", "none", "none"),
        ("network", "ANN"): PipelineConfig(
            ClassifierSpec("ANN", hidden_layers=2, units=100, activation="relu", dropout=0.5,
                           epochs=500, batch_size=256),
            "network", "maxabs", "pca", "none", "borderline_smote"),
    }
