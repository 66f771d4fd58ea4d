"""Per-second network traffic features.

Industrial networks run on a static configuration (fixed addresses, ports,
function codes), so most features measure how far the traffic of one second
departs from the instance sets seen during normal training operation.

Per second ``[t, t+1)`` the vector holds, in order:

* transfer count
* 2 MAC/IP mismatch flags (source, destination pairing)
* 11 abnormal-occurrence flags, 11 abnormal counts, 11 normal counts
* one count per normal instance of the 9 instance columns (ports excluded)
* 11 distinct-instance counts, 11 missing-value counts
* 3 means (payload size, packets of source / destination device)
* class-specific distinct counts, one per (class column, training class)

Membership is tested by exact set inclusion, also for numeric columns such as
payload size; missing cells only ever count towards the missing-value counts.
"""

from __future__ import annotations

import bisect
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, NoNormalTraffic
from .ingest import EventLabel, EventSpan, PacketRecord, SpanIndex

# raw columns entering the flag/count families
NET_COLUMNS = (
    "ip_src", "ip_dst", "mac_src", "mac_dst", "port_src", "port_dst",
    "protocol", "tcp_flags", "payload_size", "modbus_fn", "modbus_resp",
)
INSTANCE_COLUMNS = tuple(c for c in NET_COLUMNS if not c.startswith("port"))
CLASS_COLUMNS = (
    "port_src", "port_dst", "protocol", "tcp_flags", "payload_size",
    "modbus_fn", "modbus_resp", "n_pkts_src", "n_pkts_dst",
)
MEAN_COLUMNS = ("payload_size", "n_pkts_src", "n_pkts_dst")

VOCAB_FORMAT = "cpids-vocabulary"
VOCAB_VERSION = 1


def _sort_key(v):
    if isinstance(v, (int, float)):
        return (0, float(v), "")
    return (1, 0.0, str(v))


@dataclass(frozen=True)
class NormalVocabulary:
    instances: dict[str, frozenset]
    pairs_src: frozenset = frozenset()
    pairs_dst: frozenset = frozenset()

    def ordered(self, column: str) -> list:
        return sorted(self.instances[column], key=_sort_key)


@dataclass(frozen=True)
class ClassVocabulary:
    # class index -> column -> instance set
    instances: dict[int, dict[str, frozenset]]

    @property
    def classes(self) -> list[int]:
        return sorted(self.instances)


@dataclass(frozen=True)
class NetWindowFeatures:
    window_ts: int
    values: np.ndarray


def _train_seconds(training_cutoffs) -> set[int]:
    seconds = getattr(training_cutoffs, "train_seconds", training_cutoffs)
    return {int(s) for s in seconds}


def fit_vocabularies(packets: Sequence[PacketRecord], spans: Sequence[EventSpan], training_cutoffs,
                     audit=None) -> tuple[NormalVocabulary, ClassVocabulary]:
    """Collect normal and per-class instance sets from training packets.

    ``training_cutoffs`` is a :class:`~cpids.partition.SplitSpec` or an
    iterable of the integer seconds belonging to the training set. A packet
    takes the label of the second it falls in.
    """
    train = _train_seconds(training_cutoffs)
    index = SpanIndex(spans)
    label_cache: dict[int, int] = {}
    normal = {c: set() for c in NET_COLUMNS}
    pairs_src, pairs_dst = set(), set()
    per_class: dict[int, dict[str, set]] = {}
    used_seconds = set()
    for p in packets:
        sec = int(np.floor(p.ts))
        if sec not in train:
            continue
        lab = label_cache.get(sec)
        if lab is None:
            lab = label_cache[sec] = int(index.label_at(sec))
        used_seconds.add(sec)
        cls_sets = per_class.setdefault(lab, {c: set() for c in CLASS_COLUMNS})
        for c in CLASS_COLUMNS:
            v = getattr(p, c)
            if v is not None:
                cls_sets[c].add(v)
        if lab != EventLabel.Normal:
            continue
        for c in NET_COLUMNS:
            v = getattr(p, c)
            if v is not None:
                normal[c].add(v)
        if p.mac_src is not None and p.ip_src is not None:
            pairs_src.add((p.mac_src, p.ip_src))
        if p.mac_dst is not None and p.ip_dst is not None:
            pairs_dst.add((p.mac_dst, p.ip_dst))
    if EventLabel.Normal not in per_class:
        raise NoNormalTraffic("no packets fall into normal-labelled training seconds")
    if audit is not None:
        audit.record_seconds("fit_vocabularies", used_seconds)
    nv = NormalVocabulary(
        {c: frozenset(s) for c, s in normal.items()}, frozenset(pairs_src), frozenset(pairs_dst))
    cv = ClassVocabulary({lab: {c: frozenset(s) for c, s in cols.items()} for lab, cols in per_class.items()})
    return nv, cv


def feature_names(normal: NormalVocabulary, classes: ClassVocabulary) -> list[str]:
    names = ["net_transfer_count", "net_mismatch:src", "net_mismatch:dst"]
    names += [f"net_abnormal_flag:{c}" for c in NET_COLUMNS]
    names += [f"net_abnormal_count:{c}" for c in NET_COLUMNS]
    names += [f"net_normal_count:{c}" for c in NET_COLUMNS]
    for c in INSTANCE_COLUMNS:
        names += [f"net_instance_count:{c}={v}" for v in normal.ordered(c)]
    names += [f"net_distinct_count:{c}" for c in NET_COLUMNS]
    names += [f"net_nan_count:{c}" for c in NET_COLUMNS]
    names += [f"net_mean:{c}" for c in MEAN_COLUMNS]
    for c in CLASS_COLUMNS:
        names += [f"net_class_distinct:{c}:{EventLabel(k).name}" for k in classes.classes]
    return names


class _Extractor:
    def __init__(self, normal: NormalVocabulary, classes: ClassVocabulary):
        self.normal = normal
        self.classes = classes
        self.names = feature_names(normal, classes)
        self.instance_order = {c: normal.ordered(c) for c in INSTANCE_COLUMNS}
        self.known_mac_src = {m for m, _ in normal.pairs_src}
        self.known_ip_src = {i for _, i in normal.pairs_src}
        self.known_mac_dst = {m for m, _ in normal.pairs_dst}
        self.known_ip_dst = {i for _, i in normal.pairs_dst}

    def _mismatch(self, window, mac_attr, ip_attr, pairs, known_macs, known_ips) -> int:
        # a pairing is a mismatch when it is unseen although its MAC or its IP
        # is known from normal traffic
        for p in window:
            mac, ip = getattr(p, mac_attr), getattr(p, ip_attr)
            if mac is None or ip is None or (mac, ip) in pairs:
                continue
            if mac in known_macs or ip in known_ips:
                return 1
        return 0

    def window(self, window: Sequence[PacketRecord]) -> np.ndarray:
        n = len(window)
        out = [float(n)]
        nv = self.normal
        out.append(float(self._mismatch(window, "mac_src", "ip_src", nv.pairs_src,
                                        self.known_mac_src, self.known_ip_src)))
        out.append(float(self._mismatch(window, "mac_dst", "ip_dst", nv.pairs_dst,
                                        self.known_mac_dst, self.known_ip_dst)))
        columns = {c: [getattr(p, c) for p in window] for c in set(NET_COLUMNS) | set(CLASS_COLUMNS)}
        counters = {c: Counter(v for v in columns[c] if v is not None) for c in columns}
        flags, abnormal, normal, distinct, nans = [], [], [], [], []
        for c in NET_COLUMNS:
            vocab = nv.instances[c]
            cnt = counters[c]
            n_norm = sum(k for v, k in cnt.items() if v in vocab)
            n_present = sum(cnt.values())
            n_abn = n_present - n_norm
            flags.append(1.0 if n_abn > 0 else 0.0)
            abnormal.append(float(n_abn))
            normal.append(float(n_norm))
            distinct.append(float(len(cnt)))
            nans.append(float(n - n_present))
        out += flags + abnormal + normal
        for c in INSTANCE_COLUMNS:
            cnt = counters[c]
            out += [float(cnt.get(v, 0)) for v in self.instance_order[c]]
        out += distinct + nans
        for c in MEAN_COLUMNS:
            vals = [v for v in columns[c] if v is not None]
            out.append(float(np.mean(vals)) if vals else 0.0)
        for c in CLASS_COLUMNS:
            present = counters[c].keys()
            for k in self.classes.classes:
                vocab = self.classes.instances[k][c]
                out.append(float(sum(1 for v in present if v in vocab)))
        return np.asarray(out, dtype=np.float64)


def extract_window(packets: Sequence[PacketRecord], vocabularies, window_ts: int = 0) -> NetWindowFeatures:
    """Features of the packets of a single one-second window."""
    normal, classes = vocabularies
    return NetWindowFeatures(int(window_ts), _Extractor(normal, classes).window(packets))


def extract_all(packets: Sequence[PacketRecord], vocabularies, t_range: Iterable[int]) -> list[NetWindowFeatures]:
    """One feature vector per integer second in ``t_range``, empty seconds included.

    ``packets`` must be sorted by timestamp (as returned by ``load_packets``).
    """
    normal, classes = vocabularies
    ex = _Extractor(normal, classes)
    ts = [p.ts for p in packets]
    out = []
    for sec in t_range:
        lo = bisect.bisect_left(ts, sec)
        hi = bisect.bisect_left(ts, sec + 1)
        out.append(NetWindowFeatures(int(sec), ex.window(packets[lo:hi])))
    return out


# -- persistence --------------------------------------------------------------

def _jsonable(values) -> list:
    return sorted(values, key=_sort_key)


def vocabularies_to_dict(normal: NormalVocabulary, classes: ClassVocabulary) -> dict:
    return {
        "format": VOCAB_FORMAT,
        "version": VOCAB_VERSION,
        "normal": {c: _jsonable(normal.instances[c]) for c in NET_COLUMNS},
        "pairs_src": sorted(list(p) for p in normal.pairs_src),
        "pairs_dst": sorted(list(p) for p in normal.pairs_dst),
        "classes": {
            EventLabel(k).name: {c: _jsonable(classes.instances[k][c]) for c in CLASS_COLUMNS}
            for k in classes.classes
        },
    }


def vocabularies_from_dict(d: dict) -> tuple[NormalVocabulary, ClassVocabulary]:
    if d.get("format") != VOCAB_FORMAT or d.get("version") != VOCAB_VERSION:
        raise DataError(f"unsupported vocabulary file (format={d.get('format')}, version={d.get('version')})")
    normal = NormalVocabulary(
        {c: frozenset(d["normal"][c]) for c in NET_COLUMNS},
        frozenset(tuple(p) for p in d["pairs_src"]),
        frozenset(tuple(p) for p in d["pairs_dst"]),
    )
    classes = ClassVocabulary({
        int(EventLabel[name]): {c: frozenset(vals[c]) for c in CLASS_COLUMNS}
        for name, vals in d["classes"].items()
    })
    return normal, classes


def save_vocabularies(vocabularies, path) -> None:
    Path(path).write_text(json.dumps(vocabularies_to_dict(*vocabularies), indent=1, sort_keys=True))


def load_vocabularies(path):
    return vocabularies_from_dict(json.loads(Path(path).read_text()))
