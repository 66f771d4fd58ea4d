"""End-to-end runs: feature extraction, model selection, evaluation and bundles.

Output layout (``BUNDLE_LAYOUT_VERSION``)::

    <out>/run_config.yaml         the exact configuration, seed included
    <out>/features/table.csv      pruned per-second feature table (+ .meta.json)
    <out>/features/vocabularies.json
    <out>/features/cycle.json
    <out>/features/split.json
    <out>/features/pruning.log
    <out>/reports/f1_table.csv    class-wise and macro F1 per model and view
    <out>/reports/delay_table.csv F1 and detection delays, raw vs filtered
    <out>/reports/<model>_<view>_{raw,filtered}.json
    <out>/reports/<model>_<view>_confusion_{raw,filtered}.csv
    <out>/reports/<model>_<view>_grid.csv   (grid mode only)
    <out>/reports/<model>_<view>_timeline.csv
    <out>/reports/summary.txt
    <out>/models/<model>_<view>.pkl

Directories are assembled under a temporary name and renamed into place, so
an interrupted run leaves either the previous bundle or nothing.
"""

from __future__ import annotations

import csv
import json
import math
import os
import pickle
import shutil
import tempfile
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .errors import BundleVersionError, ConfigError, DataError
from .evaluate import EvalReport, compare_views, evaluate, export_timeline, write_timeline
from .fuse import FeatureTable, fuse, prune_constant, save_table, select_columns, select_view
from .ingest import CLASS_NAMES, EventLabel, SpanIndex, load_labels, load_packets, load_physical
from .netfeat import extract_all, feature_names, fit_vocabularies, vocabularies_from_dict, vocabularies_to_dict
from .partition import SplitSpec, split
from .physfeat import PHYS_FEATURE_NAMES, CycleModel, extract_phys, fit_cycle
from .pipeline import PipelineConfig, TrainedPipeline, expand_grid, fit_pipeline, grid_search, reference_pipelines
from .postfilter import filter_sequence

BUNDLE_LAYOUT_VERSION = 1
MODEL_FORMAT = "cpids-model-bundle"
MODEL_VERSION = 1
FAMILIES = ("RF", "KNN", "SVM", "ANN")
RUN_VIEWS = ("network", "fused")


@dataclass
class RunConfig:
    packets: str | None = None
    physical: str | None = None
    labels: str | None = None
    packet_schema: dict = field(default_factory=dict)
    physical_schema: dict = field(default_factory=dict)
    delimiter: str = ","
    max_gap: float = 1.0
    merge_overlaps: bool = False
    views: list = field(default_factory=lambda: list(RUN_VIEWS))
    models: list = field(default_factory=lambda: ["SVM"])
    mode: str = "fixed"                  # "fixed" or "grid"
    pipelines: dict = field(default_factory=dict)   # "<family>" or "<family>:<view>" -> pipeline dict
    grid: dict = field(default_factory=dict)        # "<family>" -> grid description
    folds: int = 5
    n_jobs: int = 1
    seed: int = 0
    out: str = "runs/latest"
    filter: bool = True
    n_test_events: int = 2
    normal_train_frac: float = 0.8
    timeline_range: list | None = None
    synth: dict = field(default_factory=dict)

    def validate(self, need_inputs: bool = True) -> "RunConfig":
        if need_inputs:
            for key in ("packets", "physical", "labels"):
                p = getattr(self, key)
                if not p:
                    raise ConfigError(f"input path '{key}' is not set")
                if not Path(p).is_file():
                    raise ConfigError(f"input file for '{key}' not found: {p}")
        bad_views = [v for v in self.views if v not in RUN_VIEWS]
        if bad_views or not self.views:
            raise ConfigError(f"views must be a non-empty subset of {RUN_VIEWS}, got {self.views}")
        bad_models = [m for m in self.models if m not in FAMILIES]
        if bad_models or not self.models:
            raise ConfigError(f"models must be a non-empty subset of {FAMILIES}, got {self.models}")
        if self.mode not in ("fixed", "grid"):
            raise ConfigError(f"mode must be 'fixed' or 'grid', got {self.mode!r}")
        if self.mode == "grid":
            missing = [m for m in self.models if m not in self.grid]
            if missing:
                raise ConfigError(f"grid mode needs a grid for {missing}")
        if self.folds < 2:
            raise ConfigError("folds must be at least 2")
        if not 0 < self.normal_train_frac < 1:
            raise ConfigError("normal_train_frac must lie in (0, 1)")
        if self.n_jobs < 1:
            raise ConfigError("n_jobs must be at least 1")
        for family in self.models:
            for view in self.views:
                self.pipeline_for(family, view).validate()
        return self

    def pipeline_for(self, family: str, view: str) -> PipelineConfig:
        d = self.pipelines.get(f"{family}:{view}", self.pipelines.get(family))
        base = reference_pipelines()[(view, family)]
        if d is None:
            cfg = base
        else:
            try:
                cfg = PipelineConfig.from_dict({**d, "view": view})
            except TypeError as exc:
                raise ConfigError(f"bad pipeline for {family}:{view}: {exc}") from exc
        return replace(cfg, filter=self.filter)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            d = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config file must hold a mapping")
        return cls.from_dict(d)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


# -- atomic output -------------------------------------------------------------

@contextmanager
def atomic_dir(final):
    """Yield a scratch directory that replaces ``final`` only on success."""
    final = Path(final)
    final.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{final.name}.", dir=final.parent))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    old = None
    if final.exists():
        old = final.parent / f".{final.name}.old-{os.getpid()}"
        os.rename(final, old)
    os.rename(tmp, final)
    if old is not None:
        shutil.rmtree(old, ignore_errors=True)


# -- features --------------------------------------------------------------------

@dataclass
class FeatureRun:
    table: FeatureTable                 # pruned
    split: SplitSpec
    vocabularies: tuple
    cycle: CycleModel
    spans: list
    n_packets: int

    @property
    def train_rows(self) -> np.ndarray:
        return self.split.train_idx

    @property
    def test_rows(self) -> np.ndarray:
        return self.split.test_idx


def _load_inputs(cfg: RunConfig):
    packets = load_packets(cfg.packets, cfg.packet_schema or None, cfg.delimiter)
    physical = load_physical(cfg.physical, cfg.physical_schema or None, cfg.max_gap)
    spans = load_labels(cfg.labels, cfg.delimiter, cfg.merge_overlaps)
    return packets, physical, spans


def _per_second(physical) -> list:
    """One physical record per window second (the first one if several share it)."""
    seen, out = set(), []
    for r in physical:
        s = int(math.floor(r.ts))
        if s not in seen:
            seen.add(s)
            out.append(r)
    return out


def build_features(cfg: RunConfig, audit=None) -> FeatureRun:
    """Ingest, partition, fit vocabularies and the cycle model on training
    seconds, extract and fuse per-second features, prune constant columns."""
    packets, physical, spans = _load_inputs(cfg)
    physical = _per_second(physical)
    ts = np.array([int(math.floor(r.ts)) for r in physical], dtype=np.int64)
    sp = split(ts, spans, cfg.n_test_events, cfg.normal_train_frac)
    vocab = fit_vocabularies(packets, spans, sp, audit=audit)
    index = SpanIndex(spans)
    train_secs = sp.train_seconds
    normal_train = [r for r, t in zip(physical, ts)
                    if int(t) in train_secs and index.label_at(float(t)) is EventLabel.Normal]
    cycle = fit_cycle(normal_train, audit=audit)
    table = _table(packets, physical, spans, vocab, cycle)
    pruned = prune_constant(table, sp, audit=audit)
    return FeatureRun(pruned, sp, vocab, cycle, spans, len(packets))


def _table(packets, physical, spans, vocab, cycle) -> FeatureTable:
    ts = [int(math.floor(r.ts)) for r in physical]
    net = extract_all(packets, vocab, ts)
    phys = extract_phys(physical, cycle)
    return fuse(net, phys, spans, feature_names(*vocab), PHYS_FEATURE_NAMES)


def write_features(run: FeatureRun, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    save_table(run.table, out_dir / "table.csv")
    (out_dir / "vocabularies.json").write_text(
        json.dumps(vocabularies_to_dict(*run.vocabularies), indent=1, sort_keys=True))
    run.cycle.save(out_dir / "cycle.json")
    run.split.save(out_dir / "split.json")
    lines = [f"pruned {len(run.table.pruned)} constant columns, kept {run.table.n_columns}"]
    lines += [f"pruned: {n}" for n in run.table.pruned]
    lines += [f"note: {n}" for n in run.table.notes]
    (out_dir / "pruning.log").write_text("\n".join(lines) + "\n")


def cmd_features(cfg: RunConfig) -> Path:
    cfg.validate()
    out = Path(cfg.out)
    run = build_features(cfg)
    with atomic_dir(out) as tmp:
        (tmp / "run_config.yaml").write_text(cfg.dump())
        write_features(run, tmp / "features")
    return out


# -- experiment ---------------------------------------------------------------

@dataclass
class ModelResult:
    family: str
    view: str
    config: PipelineConfig
    model: TrainedPipeline
    raw: EvalReport
    filtered: EvalReport
    timeline: list
    grid: object = None
    seconds: float = 0.0


@dataclass
class ExperimentResult:
    features: FeatureRun
    results: dict = field(default_factory=dict)        # (family, view) -> ModelResult

    def report(self, family: str, view: str, filtered: bool = False) -> EvalReport:
        r = self.results[(family, view)]
        return r.filtered if filtered else r.raw


def view_matrix(table: FeatureTable, view: str) -> tuple[np.ndarray, list[str]]:
    t = select_view(table, view)
    return t.values, t.column_names


def run_model(fr: FeatureRun, family: str, view: str, cfg: RunConfig, audit=None) -> ModelResult:
    t0 = time.perf_counter()
    X, names = view_matrix(fr.table, view)
    y = fr.table.labels
    tr, te = fr.train_rows, fr.test_rows
    gs = None
    if cfg.mode == "grid":
        grid = dict(cfg.grid[family])
        grid["view"] = view
        grid.setdefault("filter", cfg.filter)
        gs = grid_search(X[tr], y[tr], expand_grid(grid), cfg.folds, cfg.seed, cfg.n_jobs, audit=audit)
        config = gs.winner
    else:
        config = cfg.pipeline_for(family, view)
    model = fit_pipeline(X[tr], y[tr], config, cfg.seed, audit=audit)
    model.provenance.update(family=family, view=view, columns=names, seed=cfg.seed)
    # predictions run over the whole time axis in order, as a deployed
    # detector would; only test rows are scored
    order = np.argsort(fr.table.ts, kind="stable")
    raw_all = np.empty(len(y), dtype=np.int64)
    raw_all[order] = model.predict(X[order])
    filt_all = np.empty(len(y), dtype=np.int64)
    filt_all[order] = filter_sequence(raw_all[order], config.filter_window)
    te_sorted = te[np.argsort(fr.table.ts[te], kind="stable")]
    ts_te = fr.table.ts[te_sorted]
    test_spans = _test_spans(fr)
    name = f"{family}:{view}"
    raw = evaluate(y[te_sorted], raw_all[te_sorted], ts_te, test_spans, f"{name} raw")
    filt = evaluate(y[te_sorted], filt_all[te_sorted], ts_te, test_spans, f"{name} filtered")
    model.provenance["train_ts"] = fr.table.ts[tr].tolist()
    model.provenance["train_predictions"] = raw_all[tr].tolist()
    rng = tuple(cfg.timeline_range) if cfg.timeline_range else None
    timeline = export_timeline(ts_te, y[te_sorted], raw_all[te_sorted], filt_all[te_sorted], rng)
    return ModelResult(family, view, config, model, raw, filt, timeline, gs, time.perf_counter() - t0)


def _test_spans(fr: FeatureRun) -> list:
    ids = {i for ids in fr.split.test_events.values() for i in ids}
    return [s for s in fr.spans if s.event_id in ids]


def run_experiment(cfg: RunConfig, audit=None, features: FeatureRun | None = None) -> ExperimentResult:
    cfg.validate(need_inputs=features is None)
    fr = features if features is not None else build_features(cfg, audit=audit)
    res = ExperimentResult(fr)
    for family in cfg.models:
        for view in cfg.views:
            res.results[(family, view)] = run_model(fr, family, view, cfg, audit=audit)
    return res


def _write_confusion(report: EvalReport, path: Path) -> None:
    names = [EventLabel(c).name for c in report.confusion.classes]
    with path.open("w", newline="") as handle:
        w = csv.writer(handle)
        w.writerow(["true\\pred"] + names)
        for n, row in zip(names, report.confusion.counts):
            w.writerow([n] + [int(v) for v in row])


def _fmt(v):
    if v is None:
        return "-"
    return f"{v:.4f}" if isinstance(v, float) else v


def delay_rows(res: ExperimentResult) -> list[list]:
    header = ["model", "view", "variant"]
    header += [f"f1_{n}" for n in CLASS_NAMES] + ["macro_f1"]
    header += [f"delay_{n}" for n in CLASS_NAMES[1:]] + ["mean_delay", "mean_delay_pessimistic", "undetected"]
    rows = [header]
    for (family, view), r in res.results.items():
        for variant, rep in (("raw", r.raw), ("filtered", r.filtered)):
            row = [family, view, variant] + [float(v) for v in rep.f1.per_class] + [rep.macro_f1]
            row += [rep.delay.per_class.get(int(lab)) for lab in list(EventLabel)[1:]]
            row += [rep.delay.mean, rep.delay.pessimistic_mean, len(rep.delay.undetected)]
            rows.append(row)
    return rows


def write_experiment(res: ExperimentResult, cfg: RunConfig, out: Path) -> None:
    write_features(res.features, out / "features")
    rep_dir, model_dir = out / "reports", out / "models"
    rep_dir.mkdir()
    model_dir.mkdir()
    by_model: dict = {}
    summary = []
    for (family, view), r in res.results.items():
        stem = f"{family}_{view}"
        by_model.setdefault(family, {})[view] = r.raw
        for variant, rep in (("raw", r.raw), ("filtered", r.filtered)):
            (rep_dir / f"{stem}_{variant}.json").write_text(json.dumps(rep.to_dict(), indent=1))
            _write_confusion(rep, rep_dir / f"{stem}_confusion_{variant}.csv")
        if r.grid is not None:
            with (rep_dir / f"{stem}_grid.csv").open("w", newline="") as handle:
                csv.writer(handle).writerows(r.grid.rows())
        write_timeline(r.timeline, rep_dir / f"{stem}_timeline.csv")
        save_bundle(r.model, res.features, cfg, model_dir / f"{stem}.pkl")
        summary += [f"[{family} / {view}] {r.config.describe()}", r.raw.summary(), r.filtered.summary(), ""]
    cmp = compare_views(by_model)
    cmp.write_csv(rep_dir / "f1_table.csv")
    if cmp.mean_improvement is not None:
        summary.append(f"mean macro F1 gain of fused over network features: {cmp.mean_improvement:+.4f}")
    with (rep_dir / "delay_table.csv").open("w", newline="") as handle:
        csv.writer(handle).writerows([[_fmt(v) for v in row] for row in delay_rows(res)])
    (rep_dir / "summary.txt").write_text("\n".join(summary) + "\n")


def cmd_experiment(cfg: RunConfig) -> tuple[Path, ExperimentResult]:
    cfg.validate()
    res = run_experiment(cfg)
    out = Path(cfg.out)
    with atomic_dir(out) as tmp:
        (tmp / "run_config.yaml").write_text(cfg.dump())
        write_experiment(res, cfg, tmp)
    return out, res


# -- model bundles -------------------------------------------------------------

def save_bundle(model: TrainedPipeline, fr: FeatureRun, cfg: RunConfig, path) -> None:
    bundle = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "pipeline": model,
        "columns": model.provenance["columns"],
        "vocabularies": vocabularies_to_dict(*fr.vocabularies),
        "cycle": fr.cycle.to_dict(),
        "run_config": cfg.to_dict(),
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("wb") as handle:
        pickle.dump(bundle, handle, protocol=pickle.HIGHEST_PROTOCOL)
    os.replace(tmp, path)


def load_bundle(path) -> dict:
    try:
        with Path(path).open("rb") as handle:
            bundle = pickle.load(handle)
    except (OSError, pickle.UnpicklingError, EOFError, AttributeError, ModuleNotFoundError) as exc:
        raise BundleVersionError(f"cannot read model bundle {path}: {exc}") from exc
    if not isinstance(bundle, dict) or bundle.get("format") != MODEL_FORMAT:
        raise BundleVersionError(f"{path} is not a model bundle")
    if bundle.get("version") != MODEL_VERSION:
        raise BundleVersionError(
            f"model bundle version {bundle.get('version')} is not supported (expected {MODEL_VERSION})")
    return bundle


def predict_timeline(bundle: dict, packets_path, physical_path, packet_schema=None, physical_schema=None,
                     delimiter=",", max_gap=1.0, window: int | None = None):
    """Per-second ``(ts, raw, filtered)`` labels for new data using a saved bundle."""
    model: TrainedPipeline = bundle["pipeline"]
    vocab = vocabularies_from_dict(bundle["vocabularies"])
    cycle = CycleModel.from_dict(bundle["cycle"])
    packets = load_packets(packets_path, packet_schema, delimiter)
    physical = _per_second(load_physical(physical_path, physical_schema, max_gap))
    if not physical:
        raise DataError("no physical records to predict on")
    table = select_columns(_table(packets, physical, [], vocab, cycle), bundle["columns"])
    raw = model.predict(table.values)
    filt = filter_sequence(raw, window or model.config.filter_window)
    return table.ts, raw, filt


def write_predictions(ts, raw, filtered, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", newline="") as handle:
        w = csv.writer(handle)
        w.writerow(["ts", "raw", "filtered"])
        for t, a, b in zip(ts, raw, filtered):
            w.writerow([int(t), EventLabel(int(a)).name, EventLabel(int(b)).name])
    os.replace(tmp, path)
