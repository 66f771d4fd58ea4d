"""Physical process features: raw sensor/actuator values plus cycle progress.

The process repeats a filling/emptying cycle. Cycle starts are detected as
upward crossings of the tank-1 pressure through a threshold placed at the
midpoint of its training range, with a hysteresis band of 10% of that range.
Progress ``p`` is the time since the last cycle start, capped at the usual
cycle length ``d``; it is encoded on the unit circle as
``(sin(2*pi*p/d), cos(2*pi*p/d))`` so the wrap from ``0.95d`` to ``0.05d``
is a short step rather than a jump.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, InsufficientCycles
from .ingest import PHYSICAL_COLUMNS, PhysicalRecord

PROGRESS_COLUMNS = ("phys_progress", "phys_progress_sin", "phys_progress_cos")
PHYS_FEATURE_NAMES = [f"phys_{c}" for c in PHYSICAL_COLUMNS] + list(PROGRESS_COLUMNS)

CYCLE_FORMAT = "cpids-cycle-model"
CYCLE_VERSION = 1


@dataclass(frozen=True)
class CycleModel:
    d: float
    boundary_times: tuple[float, ...]
    threshold: float
    hysteresis: float
    wrap: bool = False

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError("cycle duration must be positive")

    @property
    def upper(self) -> float:
        return self.threshold + self.hysteresis / 2

    @property
    def lower(self) -> float:
        return self.threshold - self.hysteresis / 2

    def to_dict(self) -> dict:
        return {"format": CYCLE_FORMAT, "version": CYCLE_VERSION, "d": self.d,
                "boundary_times": list(self.boundary_times), "threshold": self.threshold,
                "hysteresis": self.hysteresis, "wrap": self.wrap}

    @classmethod
    def from_dict(cls, d: dict) -> "CycleModel":
        if d.get("format") != CYCLE_FORMAT or d.get("version") != CYCLE_VERSION:
            raise DataError("unsupported cycle model file")
        return cls(d["d"], tuple(d["boundary_times"]), d["threshold"], d["hysteresis"], d["wrap"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> "CycleModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class PhysWindowFeatures:
    window_ts: int
    raw: tuple[float, ...]
    p: float
    p_sin: float
    p_cos: float

    @property
    def values(self) -> np.ndarray:
        return np.asarray([*self.raw, self.p, self.p_sin, self.p_cos], dtype=np.float64)


def detect_boundaries(ts, signal, lower: float, upper: float) -> list[float]:
    """Times where ``signal`` rises through ``upper`` after having been below ``lower``."""
    out = []
    armed = False
    for t, v in zip(ts, signal):
        if v <= lower:
            armed = True
        elif v >= upper and armed:
            out.append(float(t))
            armed = False
    return out


def fit_cycle(records: Sequence[PhysicalRecord], hysteresis_frac: float = 0.1, wrap: bool = False,
              audit=None) -> CycleModel:
    """Estimate the usual cycle length from training tank-1 pressure.

    ``d`` is the median interval between consecutive cycle starts. Intervals
    spanning a hole in the records (e.g. where test events were cut out) are
    ignored.
    """
    if audit is not None:
        audit.record_seconds("fit_cycle", [int(math.floor(r.ts)) for r in records])
    if len(records) < 3:
        raise InsufficientCycles("too few records to detect cycles")
    ts = np.array([r.ts for r in records])
    p1 = np.array([r.pressure[0] for r in records])
    lo, hi = float(p1.min()), float(p1.max())
    span = hi - lo
    if not span > 0:
        raise InsufficientCycles("tank-1 pressure is constant")
    threshold = lo + span / 2
    band = hysteresis_frac * span
    # split into contiguous stretches so detection never bridges a hole
    breaks = np.flatnonzero(np.diff(ts) > 1.5) + 1
    boundaries, intervals = [], []
    for seg in np.split(np.arange(len(ts)), breaks):
        b = detect_boundaries(ts[seg], p1[seg], threshold - band / 2, threshold + band / 2)
        boundaries += b
        intervals += list(np.diff(b))
    if len(intervals) < 2:
        raise InsufficientCycles(f"need at least 2 complete cycles, found {len(intervals)}")
    return CycleModel(float(np.median(intervals)), tuple(boundaries), threshold, band, wrap)


def progress(t: float, model: CycleModel, last_boundary: float | None = None):
    """Cycle progress ``(p, p_sin, p_cos)`` at time ``t``.

    ``last_boundary`` defaults to the latest fitted boundary not after ``t``.
    """
    d = model.d
    if last_boundary is None:
        past = [b for b in model.boundary_times if b <= t]
        last_boundary = past[-1] if past else None
    if last_boundary is None:
        p = d
    else:
        elapsed = t - last_boundary
        p = math.fmod(elapsed, d) if model.wrap else min(elapsed, d)
    p = min(max(p, 0.0), d)
    angle = 2 * math.pi * p / d
    return p, math.sin(angle), math.cos(angle)


def extract_phys(records: Sequence[PhysicalRecord], model: CycleModel) -> list[PhysWindowFeatures]:
    """Raw values passed through unchanged, with the progress triple appended.

    Cycle starts are detected on ``records`` themselves using the fitted
    thresholds. Before the first detected start, the preceding cycle is assumed
    to have had the usual length.
    """
    ts = [r.ts for r in records]
    p1 = [r.pressure[0] for r in records]
    bounds = detect_boundaries(ts, p1, model.lower, model.upper)
    out = []
    k = -1
    for r in records:
        while k + 1 < len(bounds) and bounds[k + 1] <= r.ts:
            k += 1
        last = bounds[k] if k >= 0 else (bounds[0] - model.d if bounds else None)
        p, s, c = progress(r.ts, model, last_boundary=last)
        out.append(PhysWindowFeatures(int(math.floor(r.ts)), tuple(float(v) for v in r.values()), p, s, c))
    return out


def recover_progress(p_sin: float, p_cos: float, d: float) -> float:
    """Inverse of the circular encoding on one cycle, in ``[0, d)``."""
    angle = math.atan2(p_sin, p_cos) % (2 * math.pi)
    return angle / (2 * math.pi) * d
