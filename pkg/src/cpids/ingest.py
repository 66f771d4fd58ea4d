"""Raw log ingestion: packets, physical snapshots and event annotations.

Files are delimited text with a header row. A *schema* maps the canonical
field names used here onto the column names of a concrete file, so the
public dataset (or any other export) binds through configuration.

Missing cells are kept as ``None``; they are never replaced by a sentinel
number because per-window NaN counts are features in their own right.
"""

from __future__ import annotations

import bisect
import csv
import enum
import math
import re
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    CadenceViolation,
    EmptyFile,
    MalformedRow,
    MissingColumn,
    OverlapSameClass,
    UnknownLabel,
)


class EventLabel(enum.IntEnum):
    """Closed set of event classes. The integer value is the class index."""

    Normal = 0
    DoS = 1
    MiTM = 2
    PhysicalFault = 3
    Scanning = 4

    @classmethod
    def parse(cls, text: str) -> "EventLabel":
        key = re.sub(r"[^a-z]", "", str(text).lower())
        if key in _LABEL_ALIASES:
            return _LABEL_ALIASES[key]
        # leaks, sensor/pump breakdowns and other physical events collapse
        # into a single fault class
        if any(w in key for w in ("leak", "breakdown", "fault", "physical")):
            return cls.PhysicalFault
        raise UnknownLabel(f"unknown event label {text!r}")


_LABEL_ALIASES = {
    "normal": EventLabel.Normal,
    "dos": EventLabel.DoS,
    "ddos": EventLabel.DoS,
    "mitm": EventLabel.MiTM,
    "maninthemiddle": EventLabel.MiTM,
    "physicalfault": EventLabel.PhysicalFault,
    "scanning": EventLabel.Scanning,
    "scan": EventLabel.Scanning,
}

N_CLASSES = len(EventLabel)
CLASS_NAMES = [lab.name for lab in EventLabel]

# highest priority first; used when spans of different classes overlap
DEFAULT_PRECEDENCE = (
    EventLabel.DoS,
    EventLabel.MiTM,
    EventLabel.Scanning,
    EventLabel.PhysicalFault,
)


@dataclass(frozen=True, slots=True)
class PacketRecord:
    ts: float
    ip_src: str | None = None
    ip_dst: str | None = None
    mac_src: str | None = None
    mac_dst: str | None = None
    port_src: int | None = None
    port_dst: int | None = None
    protocol: str | None = None
    tcp_flags: str | None = None
    payload_size: int | None = None
    modbus_fn: int | None = None
    modbus_resp: float | None = None
    n_pkts_src: int | None = 0
    n_pkts_dst: int | None = 0


PACKET_FIELDS = [f.name for f in fields(PacketRecord)]

N_PRESSURE, N_PUMP, N_FLOW, N_VALVE = 8, 6, 4, 22

PHYSICAL_COLUMNS = (
    [f"pressure_{i + 1}" for i in range(N_PRESSURE)]
    + [f"pump_{i + 1}" for i in range(N_PUMP)]
    + [f"flow_{i + 1}" for i in range(N_FLOW)]
    + [f"valve_{i + 1}" for i in range(N_VALVE)]
)
PHYSICAL_FIELDS = ["ts"] + PHYSICAL_COLUMNS


@dataclass(frozen=True)
class PhysicalRecord:
    ts: float
    pressure: tuple[float, ...]
    pump_state: tuple[int, ...]
    flow: tuple[float, ...]
    valve_state: tuple[int, ...]

    def __post_init__(self):
        if (len(self.pressure), len(self.pump_state), len(self.flow), len(self.valve_state)) != (
            N_PRESSURE, N_PUMP, N_FLOW, N_VALVE,
        ):
            raise ValueError("physical record needs 8 pressures, 6 pumps, 4 flows, 22 valves")

    def values(self) -> list[float]:
        """The 40 measurements in canonical column order."""
        return [*self.pressure, *self.pump_state, *self.flow, *self.valve_state]


@dataclass(frozen=True)
class EventSpan:
    label: EventLabel
    t_start: float
    t_end: float
    event_id: int = 0

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError(f"span must have t_start < t_end, got [{self.t_start}, {self.t_end}]")

    def covers(self, t: float) -> bool:
        return self.t_start <= t < self.t_end

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


# -- cell parsing -----------------------------------------------------------

MISSING_TOKENS = frozenset({"", "nan", "NaN", "NAN", "na", "NA", "N/A", "None", "null", "-", "?"})


def parse_timestamp(text: str) -> float:
    """Seconds since the epoch. Accepts plain numbers or ISO-like date strings
    (naive times are taken as UTC)."""
    s = text.strip()
    try:
        value = float(s)
    except ValueError:
        try:
            dt = datetime.fromisoformat(s.replace("/", "-"))
        except ValueError as exc:
            raise ValueError(f"unparseable timestamp {text!r}") from exc
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        value = dt.timestamp()
    if not math.isfinite(value):
        raise ValueError(f"non-finite timestamp {text!r}")
    return value


def _missing(s: str) -> bool:
    return s.strip() in MISSING_TOKENS


def _text(s):
    return None if _missing(s) else s.strip()


def _int(s, lo=None, hi=None):
    if _missing(s):
        return None
    f = float(s)
    if not f.is_integer():
        raise ValueError(f"expected integer, got {s!r}")
    v = int(f)
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise ValueError(f"value {v} outside [{lo}, {hi}]")
    return v


def _float(s):
    if _missing(s):
        return None
    v = float(s)
    if math.isnan(v):
        return None
    return v


def _binary(s):
    if _missing(s):
        raise ValueError("binary state may not be missing")
    key = s.strip().lower()
    if key in ("true", "on", "open"):
        return 1
    if key in ("false", "off", "closed"):
        return 0
    v = float(key)
    if v not in (0.0, 1.0):
        raise ValueError(f"binary state must be 0 or 1, got {s!r}")
    return int(v)


_PACKET_PARSERS = {
    "ip_src": _text,
    "ip_dst": _text,
    "mac_src": _text,
    "mac_dst": _text,
    "port_src": lambda s: _int(s, 0, 65535),
    "port_dst": lambda s: _int(s, 0, 65535),
    "protocol": _text,
    "tcp_flags": _text,
    "payload_size": lambda s: _int(s, 0),
    "modbus_fn": _int,
    "modbus_resp": _float,
    "n_pkts_src": lambda s: _int(s, 0),
    "n_pkts_dst": lambda s: _int(s, 0),
}


def _open_rows(path, schema: Mapping[str, str], required: Sequence[str], delimiter=","):
    path = Path(path)
    handle = path.open(newline="")
    reader = csv.reader(handle, delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        handle.close()
        raise EmptyFile(f"{path}: no header row")
    header = [h.strip() for h in header]
    index = {}
    for name in required:
        column = schema.get(name, name)
        if column not in header:
            handle.close()
            raise MissingColumn(f"{path}: column {column!r} (field {name!r}) not in header")
        index[name] = header.index(column)
    return handle, reader, index


def load_packets(path, schema: Mapping[str, str] | None = None, delimiter=",") -> list[PacketRecord]:
    """Parse a packet log into :class:`PacketRecord` objects sorted by ``ts``.

    ``schema`` maps canonical field names (``PACKET_FIELDS``) onto header
    names; unmapped fields are looked up under their canonical name.
    """
    schema = dict(schema or {})
    handle, reader, index = _open_rows(path, schema, PACKET_FIELDS, delimiter)
    records = []
    with handle:
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                kw = {"ts": parse_timestamp(row[index["ts"]])}
                for name, parse in _PACKET_PARSERS.items():
                    kw[name] = parse(row[index[name]])
            except (ValueError, IndexError) as exc:
                raise MalformedRow(str(exc), line=lineno) from None
            records.append(PacketRecord(**kw))
    if not records:
        raise EmptyFile(f"{path}: header only")
    records.sort(key=lambda r: r.ts)
    return records


def load_physical(path, schema: Mapping[str, str] | None = None, max_gap: float | None = 1.0,
                  delimiter=",") -> list[PhysicalRecord]:
    """Parse per-second physical snapshots.

    Timestamps must be strictly increasing once sorted. With ``max_gap`` set,
    a gap between consecutive records larger than that many seconds raises
    :class:`CadenceViolation`.
    """
    schema = dict(schema or {})
    handle, reader, index = _open_rows(path, schema, PHYSICAL_FIELDS, delimiter)
    rows = []
    with handle:
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                ts = parse_timestamp(row[index["ts"]])
                pressure = tuple(_require(_float(row[index[f"pressure_{i + 1}"]])) for i in range(N_PRESSURE))
                pumps = tuple(_binary(row[index[f"pump_{i + 1}"]]) for i in range(N_PUMP))
                flow = tuple(_require(_float(row[index[f"flow_{i + 1}"]])) for i in range(N_FLOW))
                valves = tuple(_binary(row[index[f"valve_{i + 1}"]]) for i in range(N_VALVE))
            except (ValueError, IndexError) as exc:
                raise MalformedRow(str(exc), line=lineno) from None
            rows.append((ts, lineno, PhysicalRecord(ts, pressure, pumps, flow, valves)))
    if not rows:
        raise EmptyFile(f"{path}: header only")
    rows.sort(key=lambda r: r[0])
    for (t0, _, _), (t1, line, _) in zip(rows, rows[1:]):
        if t1 <= t0:
            raise MalformedRow(f"duplicate timestamp {t1}", line=line)
        if max_gap is not None and t1 - t0 > max_gap:
            raise CadenceViolation(f"{path}: gap of {t1 - t0:g} s before line {line} exceeds {max_gap:g} s")
    return [r[2] for r in rows]


def _require(v):
    if v is None:
        raise ValueError("sensor value may not be missing")
    return v


def load_labels(path, delimiter=",", merge_overlaps=False) -> list[EventSpan]:
    """Read ``label,start,end`` rows into event spans sorted by start time.

    Explicit ``normal`` rows are dropped: time not covered by a span is Normal
    anyway. Overlapping spans of the same class are an error unless
    ``merge_overlaps`` is set, in which case they are fused into one event
    (useful when several physical faults collapse into the fault class).
    """
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.reader(handle, delimiter=delimiter)
        raw = []
        for lineno, row in enumerate(reader, start=1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and _looks_like_header(row):
                continue
            if len(row) < 3:
                raise MalformedRow("expected label,start,end", line=lineno)
            label = EventLabel.parse(row[0])
            try:
                t0, t1 = parse_timestamp(row[1]), parse_timestamp(row[2])
            except ValueError as exc:
                raise MalformedRow(str(exc), line=lineno) from None
            if not t0 < t1:
                raise MalformedRow(f"start {t0} not before end {t1}", line=lineno)
            if label is not EventLabel.Normal:
                raw.append((t0, t1, label))
    if not raw:
        return []
    return make_spans(raw, merge_overlaps=merge_overlaps)


def _looks_like_header(row) -> bool:
    try:
        parse_timestamp(row[1])
        return False
    except (ValueError, IndexError):
        return True


def make_spans(items: Iterable[tuple[float, float, EventLabel]], merge_overlaps=False) -> list[EventSpan]:
    """Validate ``(t_start, t_end, label)`` triples and number them in start order."""
    items = sorted((float(a), float(b), EventLabel(c)) for a, b, c in items)
    by_class: dict[EventLabel, list[list]] = {}
    for t0, t1, lab in items:
        group = by_class.setdefault(lab, [])
        if group and t0 < group[-1][1]:
            if not merge_overlaps:
                raise OverlapSameClass(
                    f"{lab.name} spans [{group[-1][0]}, {group[-1][1]}) and [{t0}, {t1}) overlap")
            group[-1][1] = max(group[-1][1], t1)
            continue
        group.append([t0, t1])
    merged = sorted((t0, t1, lab) for lab, g in by_class.items() for t0, t1 in g)
    return [EventSpan(lab, t0, t1, i) for i, (t0, t1, lab) in enumerate(merged)]


def write_labels(spans: Sequence[EventSpan], path) -> None:
    with Path(path).open("w", newline="") as handle:
        w = csv.writer(handle)
        w.writerow(["label", "start", "end"])
        for s in spans:
            w.writerow([s.label.name, repr(s.t_start), repr(s.t_end)])


def label_of(t: float, spans: Sequence[EventSpan], precedence=DEFAULT_PRECEDENCE) -> EventLabel:
    span = span_of(t, spans, precedence)
    return EventLabel.Normal if span is None else span.label


def span_of(t: float, spans: Sequence[EventSpan], precedence=DEFAULT_PRECEDENCE) -> EventSpan | None:
    """The span deciding the label at time ``t`` (``None`` means Normal)."""
    covering = [s for s in spans if s.covers(t)]
    if not covering:
        return None
    rank = {lab: i for i, lab in enumerate(precedence)}
    return min(covering, key=lambda s: (rank.get(s.label, len(rank)), s.t_start))


class SpanIndex:
    """Fast repeated ``label_of`` lookups for many timestamps."""

    def __init__(self, spans: Sequence[EventSpan], precedence=DEFAULT_PRECEDENCE):
        self.spans = sorted(spans, key=lambda s: s.t_start)
        self.precedence = tuple(precedence)
        self._starts = [s.t_start for s in self.spans]
        self._max_len = max((s.duration for s in self.spans), default=0.0)

    def span_at(self, t: float) -> EventSpan | None:
        hi = bisect.bisect_right(self._starts, t)
        lo = bisect.bisect_left(self._starts, t - self._max_len)
        covering = [s for s in self.spans[lo:hi] if s.covers(t)]
        if not covering:
            return None
        if len(covering) == 1:
            return covering[0]
        return span_of(t, covering, self.precedence)

    def label_at(self, t: float) -> EventLabel:
        s = self.span_at(t)
        return EventLabel.Normal if s is None else s.label

    def labels(self, ts) -> np.ndarray:
        return np.array([int(self.label_at(float(t))) for t in ts], dtype=np.int64)

    def event_ids(self, ts) -> np.ndarray:
        out = np.full(len(ts), -1, dtype=np.int64)
        for i, t in enumerate(ts):
            s = self.span_at(float(t))
            if s is not None:
                out[i] = s.event_id
        return out


# -- writers (round-trip support) -------------------------------------------

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_packets(records: Iterable[PacketRecord], path, schema: Mapping[str, str] | None = None) -> None:
    schema = dict(schema or {})
    with Path(path).open("w", newline="") as handle:
        w = csv.writer(handle)
        w.writerow([schema.get(f, f) for f in PACKET_FIELDS])
        for r in records:
            w.writerow([_cell(getattr(r, f)) for f in PACKET_FIELDS])


def write_physical(records: Iterable[PhysicalRecord], path, schema: Mapping[str, str] | None = None) -> None:
    schema = dict(schema or {})
    with Path(path).open("w", newline="") as handle:
        w = csv.writer(handle)
        w.writerow([schema.get(f, f) for f in PHYSICAL_FIELDS])
        for r in records:
            w.writerow([_cell(r.ts)] + [_cell(v) for v in r.values()])
