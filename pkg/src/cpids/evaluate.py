"""Class-wise and macro F1, detection delays, and comparison reports.

Class-wise F1 is ``TP / (TP + (FP + FN) / 2)``; a class with no true
positives, false positives or false negatives scores 0 (with a warning).
Macro F1 is the unweighted mean over classes.

The detection delay of an event is the time from its start to the first
second inside it that is predicted as the event's class. A class's delay is
the mean over its detected events; undetected events are listed separately
and, in a pessimistic variant, charged their full duration. The overall delay
is the mean of the class delays that are defined. Normal has no delay.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import LengthMismatch, NoEventsForClass
from .ingest import CLASS_NAMES, N_CLASSES, EventLabel, EventSpan
from .postfilter import filter_sequence


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray                 # rows true, columns predicted
    classes: tuple[int, ...] = tuple(range(N_CLASSES))

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(true_labels, pred_labels, classes: Sequence[int] = tuple(range(N_CLASSES))) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(pred_labels, dtype=np.int64)
    if t.shape != p.shape:
        raise LengthMismatch(f"{len(t)} true labels vs {len(p)} predictions")
    pos = {c: i for i, c in enumerate(classes)}
    K = len(classes)
    M = np.zeros((K, K), dtype=np.int64)
    if len(t):
        ti = np.array([pos[int(c)] for c in t])
        pi = np.array([pos[int(c)] for c in p])
        np.add.at(M, (ti, pi), 1)
    return ConfusionMatrix(M, tuple(int(c) for c in classes))


@dataclass(frozen=True)
class F1Result:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    per_class: np.ndarray
    macro: float
    classes: tuple[int, ...]


def f1_scores(cm: ConfusionMatrix) -> F1Result:
    M = cm.counts
    tp = np.diag(M).astype(np.int64)
    fp = M.sum(axis=0) - tp
    fn = M.sum(axis=1) - tp
    denom = tp + 0.5 * (fp + fn)
    empty = denom == 0
    if empty.any():
        names = [_name(cm.classes[i]) for i in np.flatnonzero(empty)]
        warnings.warn(f"F1 undefined for classes {names}; scored as 0", RuntimeWarning, stacklevel=2)
    f1 = np.where(empty, 0.0, tp / np.where(empty, 1.0, denom))
    return F1Result(tp, fp, fn, f1, float(f1.mean()), cm.classes)


def macro_f1(true_labels, pred_labels, classes=None) -> float:
    if classes is None:
        classes = tuple(range(N_CLASSES))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return f1_scores(confusion(true_labels, pred_labels, classes)).macro


def _name(c: int) -> str:
    try:
        return EventLabel(c).name
    except ValueError:
        return str(c)


# -- detection delay ------------------------------------------------------------

@dataclass(frozen=True)
class EventDelay:
    event_id: int
    label: int
    t_start: float
    t_end: float
    t_det: float | None

    @property
    def delay(self) -> float | None:
        return None if self.t_det is None else self.t_det - self.t_start


@dataclass
class DelayReport:
    per_class: dict[int, float | None]
    pessimistic_per_class: dict[int, float | None]
    events: list[EventDelay]
    mean: float | None
    pessimistic_mean: float | None

    @property
    def undetected(self) -> list[EventDelay]:
        return [e for e in self.events if e.t_det is None]

    def class_delay(self, label) -> float:
        v = self.per_class.get(int(label))
        if v is None:
            raise NoEventsForClass(f"no detected events of class {_name(int(label))}")
        return v


def detection_delay(spans: Sequence[EventSpan], ts, predicted) -> DelayReport:
    """Per-event first-detection times over the per-second axis ``ts``.

    Only events with at least one second on ``ts`` are evaluated.
    """
    ts = np.asarray(ts, dtype=np.float64)
    pred = np.asarray(predicted, dtype=np.int64)
    if ts.shape != pred.shape:
        raise LengthMismatch(f"{len(ts)} timestamps vs {len(pred)} predictions")
    order = np.argsort(ts, kind="stable")
    ts, pred = ts[order], pred[order]
    events = []
    for s in sorted(spans, key=lambda s: s.t_start):
        if s.label is EventLabel.Normal:
            continue
        lo, hi = np.searchsorted(ts, s.t_start, "left"), np.searchsorted(ts, s.t_end, "left")
        if lo == hi:
            continue
        hits = np.flatnonzero(pred[lo:hi] == int(s.label))
        t_det = float(ts[lo + hits[0]]) if len(hits) else None
        events.append(EventDelay(s.event_id, int(s.label), s.t_start, s.t_end, t_det))
    per_class, pess = {}, {}
    for lab in EventLabel:
        if lab is EventLabel.Normal:
            continue
        evs = [e for e in events if e.label == lab]
        if not evs:
            continue
        detected = [e.delay for e in evs if e.t_det is not None]
        per_class[int(lab)] = float(np.mean(detected)) if detected else None
        pess[int(lab)] = float(np.mean([e.delay if e.t_det is not None else e.t_end - e.t_start for e in evs]))
    defined = [v for v in per_class.values() if v is not None]
    return DelayReport(
        per_class, pess, events,
        float(np.mean(defined)) if defined else None,
        float(np.mean(list(pess.values()))) if pess else None,
    )


# -- reports ---------------------------------------------------------------------

@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    f1: F1Result
    delay: DelayReport | None = None
    name: str = ""

    @property
    def macro_f1(self) -> float:
        return self.f1.macro

    def to_dict(self) -> dict:
        cls = [_name(c) for c in self.confusion.classes]
        d = {
            "name": self.name,
            "classes": cls,
            "confusion": self.confusion.counts.tolist(),
            "tp": self.f1.tp.tolist(),
            "fp": self.f1.fp.tolist(),
            "fn": self.f1.fn.tolist(),
            "f1": dict(zip(cls, map(float, self.f1.per_class))),
            "macro_f1": self.f1.macro,
        }
        if self.delay is not None:
            d["delay"] = {_name(k): v for k, v in self.delay.per_class.items()}
            d["delay_pessimistic"] = {_name(k): v for k, v in self.delay.pessimistic_per_class.items()}
            d["mean_delay"] = self.delay.mean
            d["mean_delay_pessimistic"] = self.delay.pessimistic_mean
            d["undetected_events"] = [e.event_id for e in self.delay.undetected]
            d["events"] = [
                {"event_id": e.event_id, "label": _name(e.label), "t_start": e.t_start, "t_det": e.t_det}
                for e in self.delay.events
            ]
        return d

    def summary(self) -> str:
        lines = [f"{self.name or 'evaluation'}: macro F1 = {self.f1.macro:.3f}"]
        for c, f in zip(self.confusion.classes, self.f1.per_class):
            tau = ""
            if self.delay is not None and c in self.delay.per_class:
                v = self.delay.per_class[c]
                tau = "  delay undetected" if v is None else f"  delay {v:.2f} s"
            lines.append(f"  {_name(c):<14} F1 {f:.3f}{tau}")
        if self.delay is not None and self.delay.mean is not None:
            lines.append(f"  mean delay {self.delay.mean:.2f} s (pessimistic {self.delay.pessimistic_mean:.2f} s)")
        if self.delay is not None and self.delay.undetected:
            lines.append(f"  UNDETECTED events: {[e.event_id for e in self.delay.undetected]}")
        return "\n".join(lines)


def evaluate(true_labels, pred_labels, ts=None, spans: Sequence[EventSpan] | None = None, name="") -> EvalReport:
    cm = confusion(true_labels, pred_labels)
    delay = detection_delay(spans, ts, pred_labels) if spans is not None and ts is not None else None
    return EvalReport(cm, f1_scores(cm), delay, name)


@dataclass
class ComparisonReport:
    models: list[str]
    views: list[str]
    f1: dict[tuple[str, str], dict[str, float]]     # (model, view) -> class/macro -> score
    improvements: dict[str, float] = field(default_factory=dict)

    @property
    def mean_improvement(self) -> float | None:
        return float(np.mean(list(self.improvements.values()))) if self.improvements else None

    def rows(self) -> list[list]:
        header = ["class"] + [f"{m}:{v}" for v in self.views for m in self.models]
        out = [header]
        for key in CLASS_NAMES + ["macro"]:
            out.append([key] + [self.f1[(m, v)].get(key, float("nan")) for v in self.views for m in self.models])
        return out

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as handle:
            w = csv.writer(handle)
            for row in self.rows():
                w.writerow([f"{x:.4f}" if isinstance(x, float) else x for x in row])
            if self.improvements:
                w.writerow([])
                w.writerow(["model", "macro_f1_improvement"])
                for m, d in self.improvements.items():
                    w.writerow([m, f"{d:.4f}"])


def compare_views(results: Mapping[str, Mapping[str, EvalReport]], base="network", target="fused") -> ComparisonReport:
    """Side-by-side class-wise and macro F1 per model and view, with the
    macro F1 gain of ``target`` over ``base`` per model."""
    models = list(results)
    views = []
    for m in models:
        for v in results[m]:
            if v not in views:
                views.append(v)
    f1 = {}
    for m in models:
        for v, rep in results[m].items():
            scores = {_name(c): float(s) for c, s in zip(rep.confusion.classes, rep.f1.per_class)}
            scores["macro"] = rep.f1.macro
            f1[(m, v)] = scores
    improvements = {
        m: results[m][target].f1.macro - results[m][base].f1.macro
        for m in models if base in results[m] and target in results[m]
    }
    return ComparisonReport(models, views, f1, improvements)


def export_timeline(ts, true_labels, raw_pred, filtered_pred=None, t_range=None) -> list[tuple]:
    """Per-second ``(ts, true, raw, filtered)`` rows, optionally cut to ``t_range = (lo, hi)``
    (inclusive). Filtering runs over the full sequence before cutting."""
    ts = np.asarray(ts)
    if filtered_pred is None:
        filtered_pred = filter_sequence(raw_pred)
    rows = []
    for t, a, b, c in zip(ts, true_labels, raw_pred, filtered_pred):
        if t_range is not None and not (t_range[0] <= t <= t_range[1]):
            continue
        rows.append((int(t), _name(int(a)), _name(int(b)), _name(int(c))))
    return rows


def write_timeline(rows, path) -> None:
    with Path(path).open("w", newline="") as handle:
        w = csv.writer(handle)
        w.writerow(["ts", "true", "raw", "filtered"])
        w.writerows(rows)
