"""Event-aware train/test partitioning and stratified folds.

An attack or fault event is a contiguous run of seconds; splitting one event
across train and test leaks its future into training. The last two events
of every non-normal class therefore go to the test set whole, and the normal
seconds are cut in time: the first 80% train, the rest test.

Model selection later uses *shuffled* stratified folds on the training set.
Shuffling leaks information between neighbouring seconds during selection,
but is needed so that every fold sees every attack type. The held-out test
evaluation is unaffected by this.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ClassTooSmall, DataError, TooFewEvents
from .ingest import EventLabel, EventSpan, SpanIndex

SPLIT_FORMAT = "cpids-split"
SPLIT_VERSION = 1


@dataclass(frozen=True)
class SplitSpec:
    ts: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    test_events: dict[str, list[int]]
    normal_cutoff_ts: float
    row_event_ids: np.ndarray = field(repr=False)

    @property
    def train_seconds(self) -> set[int]:
        return {int(t) for t in self.ts[self.train_idx]}

    @property
    def test_seconds(self) -> set[int]:
        return {int(t) for t in self.ts[self.test_idx]}

    @property
    def train_mask(self) -> np.ndarray:
        m = np.zeros(len(self.ts), dtype=bool)
        m[self.train_idx] = True
        return m

    def to_dict(self) -> dict:
        return {
            "format": SPLIT_FORMAT,
            "version": SPLIT_VERSION,
            "normal_cutoff_ts": self.normal_cutoff_ts,
            "test_events": self.test_events,
            "train_ts": [int(t) for t in self.ts[self.train_idx]],
            "test_ts": [int(t) for t in self.ts[self.test_idx]],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path, spans: Sequence[EventSpan] = ()) -> "SplitSpec":
        d = json.loads(Path(path).read_text())
        if d.get("format") != SPLIT_FORMAT or d.get("version") != SPLIT_VERSION:
            raise DataError("unsupported split file")
        train, test = np.asarray(d["train_ts"], dtype=np.int64), np.asarray(d["test_ts"], dtype=np.int64)
        ts = np.sort(np.concatenate([train, test]))
        is_train = np.isin(ts, train)
        return cls(ts, np.flatnonzero(is_train), np.flatnonzero(~is_train), d["test_events"],
                   d["normal_cutoff_ts"], SpanIndex(spans).event_ids(ts))

    def class_fractions(self, labels: np.ndarray) -> dict[str, float]:
        """Share of each class's rows that ended up in training."""
        labels = np.asarray(labels)
        out = {}
        for lab in EventLabel:
            n = int(np.sum(labels == lab))
            if n:
                out[lab.name] = float(np.sum(labels[self.train_idx] == lab)) / n
        return out


def split(table, spans: Sequence[EventSpan], n_test_events: int = 2, normal_train_frac: float = 0.8) -> SplitSpec:
    """Partition rows of ``table`` (a FeatureTable or an array of per-second
    timestamps) into train and test sets."""
    ts = np.asarray(getattr(table, "ts", table))
    index = SpanIndex(spans)
    labels = index.labels(ts)
    event_ids = index.event_ids(ts)

    test_events: dict[str, list[int]] = {}
    test_event_ids: set[int] = set()
    for lab in EventLabel:
        if lab is EventLabel.Normal:
            continue
        events = sorted((s for s in spans if s.label is lab), key=lambda s: s.t_start)
        if not events:
            continue
        if len(events) <= n_test_events:
            raise TooFewEvents(
                f"{lab.name}: {len(events)} events, need more than {n_test_events} to keep one for training")
        chosen = [s.event_id for s in events[-n_test_events:]]
        test_events[lab.name] = chosen
        test_event_ids.update(chosen)

    is_test = np.isin(event_ids, list(test_event_ids))
    normal_rows = np.flatnonzero(labels == EventLabel.Normal)
    cutoff = math.inf
    if len(normal_rows):
        order = normal_rows[np.argsort(ts[normal_rows], kind="stable")]
        n_train = max(1, math.ceil(normal_train_frac * len(order)))
        cutoff = float(ts[order[n_train - 1]])
        is_test[normal_rows] = ts[normal_rows] > cutoff
    return SplitSpec(ts, np.flatnonzero(~is_test), np.flatnonzero(is_test), test_events, cutoff, event_ids)


def stratified_shuffled_folds(labels, k: int = 5, seed: int = 0) -> list[np.ndarray]:
    """``k`` disjoint validation index sets with class proportions kept within one row.

    Classes are dealt out in turn; each class's remainder rows start at the
    fold following the previous class's remainder so fold sizes stay balanced.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if len(idx) < k:
            raise ClassTooSmall(f"class {c} has {len(idx)} rows, fewer than {k} folds")
        idx = rng.permutation(idx)
        for j, chunk in enumerate(np.array_split(idx, k)):
            folds[(j + offset) % k].extend(chunk.tolist())
        offset = (offset + len(idx) % k) % k
    return [np.sort(np.asarray(f, dtype=np.int64)) for f in folds]
