"""Moving majority filter over classifier outputs.

The window holds the six most recent non-scanning predictions, the current
one included, and the output is their most frequent label. When several
labels share the top count the previous output is kept; with a full window
this makes a clean class change surface exactly three steps late. Scanning
predictions bypass the filter: they are emitted as-is and never enter the
window, since scans do not have to arrive as sequences.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .ingest import EventLabel

WINDOW = 6


@dataclass
class FilterState:
    window_len: int = WINDOW
    window: deque = field(default_factory=deque)
    last_output: int = int(EventLabel.Normal)
    bypass: frozenset = frozenset({int(EventLabel.Scanning)})


def filter_step(state: FilterState, raw_label) -> tuple[FilterState, int]:
    raw = int(raw_label)
    if raw in state.bypass:
        return state, raw
    state.window.append(raw)
    while len(state.window) > state.window_len:
        state.window.popleft()
    ranked = Counter(state.window).most_common()
    top = ranked[0][1]
    leaders = [lab for lab, n in ranked if n == top]
    out = leaders[0] if len(leaders) == 1 else state.last_output
    state.last_output = out
    return state, out


def filter_sequence(raw_labels: Iterable, window_len: int = WINDOW,
                    bypass=(EventLabel.Scanning,)) -> np.ndarray:
    state = FilterState(window_len=window_len, bypass=frozenset(int(b) for b in bypass))
    out = []
    for lab in raw_labels:
        state, o = filter_step(state, lab)
        out.append(o)
    return np.asarray(out, dtype=np.int64)
