import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpids.errors import InsufficientCycles
from cpids.ingest import PhysicalRecord
from cpids.physfeat import (
    PHYS_FEATURE_NAMES, CycleModel, extract_phys, fit_cycle, progress, recover_progress,
)


def records_from(p1, t0=0):
    return [PhysicalRecord(float(t0 + i), (float(v),) + (1.0,) * 7, (0, 1, 0, 0, 0, 0), (0.5,) * 4, (1,) * 22)
            for i, v in enumerate(p1)]


def triangle(n, period, lo=1.0, hi=3.0):
    ph = (np.arange(n) % period) / period
    return lo + (hi - lo) * np.where(ph < 0.5, 2 * ph, 2 - 2 * ph)


def test_triangle_period_recovered():
    model = fit_cycle(records_from(triangle(1500, 300)))
    assert abs(model.d - 300) <= 1
    assert all(b > a for a, b in zip(model.boundary_times, model.boundary_times[1:]))


def test_constant_trace_rejected():
    with pytest.raises(InsufficientCycles):
        fit_cycle(records_from([2.0] * 600))


def test_single_cycle_rejected():
    with pytest.raises(InsufficientCycles):
        fit_cycle(records_from(triangle(350, 300)))


def sawtooth_cycles(lengths, lo=1.0, hi=3.0):
    """Fast 10 s rise at each cycle start, slow decay after; one up-crossing per start."""
    out = []
    for n in lengths:
        rise = np.linspace(lo, hi, 10)
        out.append(np.concatenate([rise, np.linspace(hi, lo, n - 10)]))
    return np.concatenate(out)


def test_median_of_two_periods():
    model = fit_cycle(records_from(sawtooth_cycles([298, 302, 50])))
    assert list(np.diff(model.boundary_times)) == [298.0, 302.0]
    assert model.d == 300.0


def test_gap_intervals_ignored():
    a = records_from(triangle(900, 300))
    b = records_from(triangle(900, 300), t0=2000)
    model = fit_cycle(a + b)
    assert abs(model.d - 300) <= 1


def test_progress_identities():
    m = CycleModel(120.0, (0.0,), 2.0, 0.2)
    p, s, c = progress(0.0, m)
    assert (p, s, c) == (0.0, 0.0, 1.0)
    p, s, c = progress(30.0, m)
    assert s == pytest.approx(1.0, abs=1e-9) and c == pytest.approx(0.0, abs=1e-9)
    p, _, _ = progress(1000.0, m)
    assert p == 120.0
    p, _, _ = progress(150.0, CycleModel(120.0, (0.0,), 2.0, 0.2, wrap=True))
    assert p == pytest.approx(30.0)


def test_no_discontinuity_across_boundary():
    d = 200.0
    a = 2 * math.pi * 0.95
    b = 2 * math.pi * 0.05
    va = np.array([math.sin(a), math.cos(a)])
    vb = np.array([math.sin(b), math.cos(b)])
    angle = math.acos(np.clip(va @ vb, -1, 1))
    assert angle == pytest.approx(0.10 * 2 * math.pi, abs=1e-9)
    m = CycleModel(d, (0.0,), 0, 0)
    _, s1, c1 = progress(0.95 * d, m, last_boundary=0.0)
    _, s2, c2 = progress(0.05 * d, m, last_boundary=0.0)
    assert math.hypot(s1 - s2, c1 - c2) == pytest.approx(2 * math.sin(0.1 * math.pi), abs=1e-9)


def test_extract_pass_through_and_length():
    sig = triangle(100 * 3, 100)
    recs = records_from(sig)
    recs[5] = PhysicalRecord(5.0, recs[5].pressure, (1, 0, 0, 0, 0, 1), recs[5].flow, recs[5].valve_state)
    model = fit_cycle(recs)
    out = extract_phys(recs, model)
    assert len(out) == len(recs)
    assert out[5].raw[8] == 1
    for r, w in zip(recs, out):
        assert list(w.raw) == r.values()
        assert 0 <= w.p <= model.d
        assert w.p_sin ** 2 + w.p_cos ** 2 == pytest.approx(1.0, abs=1e-9)
    assert len(out[0].values) == len(PHYS_FEATURE_NAMES) == 43


@settings(max_examples=200)
@given(st.floats(0.0, 1.0, exclude_max=True), st.floats(10.0, 1000.0))
def test_bijective_on_one_cycle(frac, d):
    m = CycleModel(d, (0.0,), 0, 0)
    p, s, c = progress(frac * d, m, last_boundary=0.0)
    assert recover_progress(s, c, d) == pytest.approx(p, abs=1e-6 * d)


def test_model_persistence(tmp_path):
    m = fit_cycle(records_from(triangle(1000, 250)))
    m.save(tmp_path / "c.json")
    assert CycleModel.load(tmp_path / "c.json") == m
