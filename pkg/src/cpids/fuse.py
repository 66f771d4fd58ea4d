"""Alignment of network and physical features into one labelled table."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AllConstant, DataError, TimestampMismatch, UnknownView
from .ingest import EventLabel, EventSpan, SpanIndex

VIEWS = ("network", "physical", "fused")
TABLE_FORMAT = "cpids-feature-table"
TABLE_VERSION = 1


@dataclass(frozen=True)
class FeatureTable:
    ts: np.ndarray                 # int64 seconds, one row each
    labels: np.ndarray             # int64 EventLabel values
    values: np.ndarray             # float64, rows x columns
    column_names: list[str]
    groups: list[str]              # "network" or "physical" per column
    pruned: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        n, m = self.values.shape
        if len(self.ts) != n or len(self.labels) != n:
            raise ValueError("ts, labels and values disagree on row count")
        if len(self.column_names) != m or len(self.groups) != m:
            raise ValueError("column metadata disagrees with value width")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]

    def mask(self, view: str) -> np.ndarray:
        if view not in VIEWS:
            raise UnknownView(f"unknown view {view!r}; expected one of {VIEWS}")
        g = np.asarray(self.groups)
        if view == "fused":
            return np.ones(len(g), dtype=bool)
        return g == view

    def rows(self, idx) -> "FeatureTable":
        return replace(self, ts=self.ts[idx], labels=self.labels[idx], values=self.values[idx])


def fuse(net_features: Sequence, phys_features: Sequence, spans: Sequence[EventSpan],
         net_names: Sequence[str], phys_names: Sequence[str]) -> FeatureTable:
    """Concatenate per-second network and physical vectors keyed on the window second."""
    net_ts = np.array([w.window_ts for w in net_features], dtype=np.int64)
    phys_ts = np.array([w.window_ts for w in phys_features], dtype=np.int64)
    if net_ts.shape != phys_ts.shape or not np.array_equal(net_ts, phys_ts):
        raise TimestampMismatch(
            f"network windows ({len(net_ts)}) and physical windows ({len(phys_ts)}) do not cover the same seconds")
    if len(net_ts) and (len(np.unique(net_ts)) != len(net_ts)):
        raise TimestampMismatch("duplicate window seconds")
    net = np.vstack([w.values for w in net_features]) if len(net_features) else np.zeros((0, len(net_names)))
    phys = np.vstack([w.values for w in phys_features]) if len(phys_features) else np.zeros((0, len(phys_names)))
    labels = SpanIndex(spans).labels(net_ts)
    return FeatureTable(
        ts=net_ts,
        labels=labels,
        values=np.hstack([net, phys]),
        column_names=list(net_names) + list(phys_names),
        groups=["network"] * len(net_names) + ["physical"] * len(phys_names),
    )


def constant_columns(values: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
    """Boolean mask of columns whose spread is zero (or negligible relative to magnitude)."""
    if values.shape[0] == 0:
        return np.ones(values.shape[1], dtype=bool)
    hi, lo = values.max(axis=0), values.min(axis=0)
    spread = hi - lo
    scale = np.maximum(np.abs(hi), np.abs(lo))
    return (spread == 0) | (spread < rel_tol * scale)


def prune_constant(table: FeatureTable, training_cutoffs, audit=None) -> FeatureTable:
    """Drop columns that are constant over the training rows.

    Constancy is judged on training rows only; a column that varies only in
    test rows is still removed (and a warning is issued).
    """
    if hasattr(training_cutoffs, "train_mask"):
        train_ts = training_cutoffs.ts[training_cutoffs.train_idx]
    else:
        train_ts = np.asarray(sorted(training_cutoffs))
    train_mask = np.isin(table.ts, train_ts)
    if audit is not None:
        audit.record_seconds("prune_constant", table.ts[train_mask].tolist())
    const = constant_columns(table.values[train_mask])
    if const.all():
        raise AllConstant("every column is constant on the training rows")
    notes = list(table.notes)
    test_var = ~constant_columns(table.values[~train_mask]) if (~train_mask).any() else np.zeros_like(const)
    for j in np.flatnonzero(const & test_var):
        msg = f"column {table.column_names[j]} constant in training but varies in test; removed"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
    keep = ~const
    return FeatureTable(
        ts=table.ts,
        labels=table.labels,
        values=table.values[:, keep],
        column_names=[n for n, k in zip(table.column_names, keep) if k],
        groups=[g for g, k in zip(table.groups, keep) if k],
        pruned=list(table.pruned) + [n for n, k in zip(table.column_names, keep) if not k],
        notes=notes,
    )


def select_view(table: FeatureTable, view: str) -> FeatureTable:
    m = table.mask(view)
    return replace(
        table,
        values=table.values[:, m],
        column_names=[n for n, k in zip(table.column_names, m) if k],
        groups=[g for g, k in zip(table.groups, m) if k],
    )


def select_columns(table: FeatureTable, names: Sequence[str]) -> FeatureTable:
    """Reorder/subset columns by name (used to align inference data with a trained model)."""
    pos = {n: i for i, n in enumerate(table.column_names)}
    missing = [n for n in names if n not in pos]
    if missing:
        raise DataError(f"feature columns missing from table: {missing[:5]}")
    idx = [pos[n] for n in names]
    return replace(table, values=table.values[:, idx], column_names=list(names),
                   groups=[table.groups[i] for i in idx])


# -- persistence --------------------------------------------------------------

def save_table(table: FeatureTable, path) -> None:
    """Write ``<path>`` (delimited values) and ``<path>.meta.json`` (columns, groups, pruning log)."""
    path = Path(path)
    with path.open("w", newline="") as handle:
        w = csv.writer(handle)
        w.writerow(["ts", "label"] + table.column_names)
        for t, lab, row in zip(table.ts, table.labels, table.values):
            w.writerow([int(t), EventLabel(int(lab)).name] + [repr(float(v)) for v in row])
    meta = {
        "format": TABLE_FORMAT,
        "version": TABLE_VERSION,
        "column_names": table.column_names,
        "groups": table.groups,
        "pruned": table.pruned,
        "notes": table.notes,
    }
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=1))


def load_table(path) -> FeatureTable:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".meta.json").read_text())
    if meta.get("format") != TABLE_FORMAT or meta.get("version") != TABLE_VERSION:
        raise DataError("unsupported feature table metadata")
    with path.open(newline="") as handle:
        r = csv.reader(handle)
        header = next(r)
        if header[2:] != meta["column_names"]:
            raise DataError("feature table header does not match its metadata")
        ts, labels, rows = [], [], []
        for row in r:
            ts.append(int(row[0]))
            labels.append(int(EventLabel[row[1]]))
            rows.append([float(v) for v in row[2:]])
    values = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(meta["column_names"]))
    return FeatureTable(np.asarray(ts, dtype=np.int64), np.asarray(labels, dtype=np.int64), values,
                        meta["column_names"], meta["groups"], meta["pruned"], meta["notes"])
