import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from cpids.ingest import EventLabel as L
from cpids.postfilter import FilterState, filter_sequence, filter_step
from oracles import majority_filter_reference

N, D, M, F, S = (int(x) for x in (L.Normal, L.DoS, L.MiTM, L.PhysicalFault, L.Scanning))
labels = st.sampled_from([N, D, M, F, S])
non_scan = st.sampled_from([N, D, M, F])


def test_empty_and_steady():
    assert filter_sequence([]).tolist() == []
    assert filter_sequence([N] * 50).tolist() == [N] * 50


def test_all_scanning_unchanged():
    assert filter_sequence([S] * 9).tolist() == [S] * 9


def test_clean_step_surfaces_three_late():
    raw = [N] * 10 + [D] * 10
    out = filter_sequence(raw).tolist()
    assert out.index(D) == 13
    assert out[13:] == [D] * 7


def test_fault_detected_three_late_becomes_six():
    # a class already recognised 3 s late picks up another 3 s
    raw = [N] * 10 + [N] * 3 + [F] * 20
    out = filter_sequence(raw).tolist()
    assert out.index(F) - 10 == 6


def test_isolated_flip_trace():
    raw = [N, N, M, N, N, N, N]
    state = FilterState()
    outs = []
    for r in raw:
        state, o = filter_step(state, r)
        outs.append(o)
        assert len(state.window) <= 6
    assert outs == [N] * 7


def test_scanning_never_enters_window():
    state = FilterState()
    for r in [D, S, S, D]:
        state, _ = filter_step(state, r)
    assert list(state.window) == [D, D]


@settings(max_examples=200, deadline=None)
@given(st.lists(labels, max_size=80))
def test_matches_reference_rule(raw):
    assert filter_sequence(raw).tolist() == majority_filter_reference(raw)


@settings(max_examples=200, deadline=None)
@given(non_scan, non_scan, st.integers(6, 30), st.integers(1, 29))
def test_isolated_flip_never_surfaces(c, other, run, pos):
    if other == c:
        other = (c + 1) % 4
    raw = [c] * run
    raw[1 + (pos - 1) % (run - 1)] = other      # at least one run sample precedes the flip
    assert other not in filter_sequence(raw).tolist()


@settings(max_examples=200, deadline=None)
@given(st.lists(labels, max_size=60))
def test_scanning_transparency(raw):
    out = filter_sequence(raw).tolist()
    assert all(o == S for r, o in zip(raw, out) if r == S)
    kept = [r for r in raw if r != S]
    assert [o for r, o in zip(raw, out) if r != S] == filter_sequence(kept).tolist()


@settings(max_examples=100, deadline=None)
@given(non_scan, st.integers(1, 40))
def test_constant_stream_idempotent(c, n):
    raw = [c] * n
    out = filter_sequence(raw).tolist()
    assert out == raw
    assert filter_sequence(out).tolist() == out


@settings(max_examples=100, deadline=None)
@given(non_scan, non_scan, st.integers(6, 20), st.integers(6, 20))
def test_step_delay_is_exactly_three(a, b, n_a, n_b):
    if a == b:
        b = (a + 1) % 4
    out = filter_sequence([a] * n_a + [b] * n_b).tolist()
    assert out[: n_a + 3] == [a] * (n_a + 3)
    assert out[n_a + 3:] == [b] * (n_b - 3)


@settings(max_examples=100, deadline=None)
@given(st.lists(labels, max_size=50))
def test_length_preserved(raw):
    assert len(filter_sequence(raw)) == len(raw)
    assert np.asarray(filter_sequence(raw)).dtype == np.int64
