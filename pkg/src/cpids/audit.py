"""Instrumentation for leakage checks.

Components that fit state accept an optional ``audit`` object and report what
they were fitted on: either the integer seconds they consumed or digests of
the matrix rows handed to a fit call. Tests compare these logs against the
test split.
"""

from __future__ import annotations

import hashlib
from collections import defaultdict

import numpy as np


def row_digests(X) -> set[bytes]:
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    return {hashlib.blake2b(row.tobytes(), digest_size=16).digest() for row in X}


class FitAudit:
    def __init__(self):
        self.seconds: dict[str, set[int]] = defaultdict(set)
        self.rows: dict[str, set[bytes]] = defaultdict(set)
        self.calls: list[tuple[str, int]] = []

    def record_seconds(self, step: str, seconds) -> None:
        s = {int(t) for t in seconds}
        self.seconds[step] |= s
        self.calls.append((step, len(s)))

    def record_rows(self, step: str, X) -> None:
        d = row_digests(X)
        self.rows[step] |= d
        self.calls.append((step, len(X)))

    def steps(self) -> list[str]:
        return sorted(set(self.seconds) | set(self.rows))
