import csv
import math
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpids.errors import (
    CadenceViolation, EmptyFile, MalformedRow, MissingColumn, OverlapSameClass, UnknownLabel,
)
from cpids.ingest import (
    PACKET_FIELDS, PHYSICAL_FIELDS, EventLabel, EventSpan, PacketRecord, PhysicalRecord, SpanIndex,
    label_of, load_labels, load_packets, load_physical, make_spans, write_packets, write_physical,
)


def _packet_row(ts, **kw):
    row = {f: "" for f in PACKET_FIELDS}
    row.update(ts=ts, ip_src="192.168.1.1", ip_dst="192.168.1.2", mac_src="aa:bb:cc:00:00:01",
               mac_dst="aa:bb:cc:00:00:02", port_src="40000", port_dst="502", protocol="MODBUS",
               tcp_flags="PSH,ACK", payload_size="12", modbus_fn="3", modbus_resp="7",
               n_pkts_src="3", n_pkts_dst="2")
    row.update(kw)
    return row


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=header)
        w.writeheader()
        w.writerows(rows)
    return path


def _phys_row(ts, **kw):
    row = {"ts": ts}
    row.update({f"pressure_{i}": "1.5" for i in range(1, 9)})
    row.update({f"pump_{i}": "0" for i in range(1, 7)})
    row.update({f"flow_{i}": "0.25" for i in range(1, 5)})
    row.update({f"valve_{i}": "1" for i in range(1, 23)})
    row.update(kw)
    return row


# -- packets -------------------------------------------------------------------

def test_port_dst_parsed(tmp_path):
    p = _write_rows(tmp_path / "p.csv", PACKET_FIELDS, [_packet_row("100.5")])
    (rec,) = load_packets(p)
    assert rec.port_dst == 502
    assert rec.ip_src == "192.168.1.1"
    assert rec.modbus_resp == 7.0


def test_header_only_is_empty_file(tmp_path):
    p = _write_rows(tmp_path / "p.csv", PACKET_FIELDS, [])
    with pytest.raises(EmptyFile):
        load_packets(p)


def test_out_of_order_rows_sorted(tmp_path):
    ts = [0.1, 0.2, 0.3, 0.9, 0.4, 0.5, 0.6, 0.05, 0.7, 0.8]
    p = _write_rows(tmp_path / "p.csv", PACKET_FIELDS, [_packet_row(repr(t)) for t in ts])
    got = [r.ts for r in load_packets(p)]
    assert got == sorted(ts)
    assert len(got) == 10


def test_missing_cells_stay_missing(tmp_path):
    p = _write_rows(tmp_path / "p.csv", PACKET_FIELDS,
                    [_packet_row("1.0", port_src="", modbus_fn="", modbus_resp="NaN", ip_dst="")])
    (rec,) = load_packets(p)
    assert rec.port_src is None and rec.modbus_fn is None and rec.modbus_resp is None and rec.ip_dst is None
    assert rec.port_dst == 502


def test_missing_column(tmp_path):
    header = [f for f in PACKET_FIELDS if f != "tcp_flags"]
    row = _packet_row("1.0")
    row.pop("tcp_flags")
    p = _write_rows(tmp_path / "p.csv", header, [row])
    with pytest.raises(MissingColumn):
        load_packets(p)


@pytest.mark.parametrize("field,value", [("port_dst", "abc"), ("port_src", "70000"), ("payload_size", "-1")])
def test_malformed_row_reports_line(tmp_path, field, value):
    rows = [_packet_row("1.0"), _packet_row("2.0", **{field: value})]
    p = _write_rows(tmp_path / "p.csv", PACKET_FIELDS, rows)
    with pytest.raises(MalformedRow) as exc:
        load_packets(p)
    assert exc.value.line == 3


def test_schema_mapping(tmp_path):
    schema = {f: f"Col {f.upper()}" for f in PACKET_FIELDS}
    row = {schema[k]: v for k, v in _packet_row("5.25").items()}
    p = _write_rows(tmp_path / "p.csv", list(schema.values()), [row])
    (rec,) = load_packets(p, schema)
    assert rec.ts == 5.25 and rec.port_dst == 502


# -- physical ------------------------------------------------------------------

def test_physical_41_columns(tmp_path):
    p = _write_rows(tmp_path / "ph.csv", PHYSICAL_FIELDS, [_phys_row("10", pump_1="1", valve_22="0")])
    (rec,) = load_physical(p)
    assert (len(rec.pressure), len(rec.pump_state), len(rec.flow), len(rec.valve_state)) == (8, 6, 4, 22)
    assert rec.pump_state[0] == 1 and rec.valve_state[21] == 0
    assert len(PHYSICAL_FIELDS) == 41


def test_pump_value_two_is_malformed(tmp_path):
    p = _write_rows(tmp_path / "ph.csv", PHYSICAL_FIELDS, [_phys_row("10", pump_3="2")])
    with pytest.raises(MalformedRow):
        load_physical(p)


def test_sixty_row_cadence(tmp_path):
    p = _write_rows(tmp_path / "ph.csv", PHYSICAL_FIELDS, [_phys_row(str(1000 + i)) for i in range(60)])
    recs = load_physical(p)
    assert len(recs) == 60
    assert all(b.ts - a.ts == 1 for a, b in zip(recs, recs[1:]))


def test_cadence_violation(tmp_path):
    rows = [_phys_row(str(t)) for t in (0, 1, 2, 6, 7)]
    p = _write_rows(tmp_path / "ph.csv", PHYSICAL_FIELDS, rows)
    with pytest.raises(CadenceViolation):
        load_physical(p, max_gap=1.0)
    assert len(load_physical(p, max_gap=None)) == 5


def test_duplicate_physical_timestamp(tmp_path):
    p = _write_rows(tmp_path / "ph.csv", PHYSICAL_FIELDS, [_phys_row("1"), _phys_row("1")])
    with pytest.raises(MalformedRow):
        load_physical(p)


# -- labels --------------------------------------------------------------------

def test_label_row(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("dos,100,160\n")
    (span,) = load_labels(p)
    assert (span.label, span.t_start, span.t_end) == (EventLabel.DoS, 100.0, 160.0)


def test_fault_kinds_collapse(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("label,start,end\nleak,0,10\npump_breakdown,20,30\nsensor fault,40,50\n")
    assert [s.label for s in load_labels(p)] == [EventLabel.PhysicalFault] * 3


def test_overlap_same_class(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("dos,0,10\ndos,5,15\n")
    with pytest.raises(OverlapSameClass):
        load_labels(p)
    merged = load_labels(p, merge_overlaps=True)
    assert [(s.t_start, s.t_end) for s in merged] == [(0.0, 15.0)]


def test_unknown_label(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("ransomware,0,10\n")
    with pytest.raises(UnknownLabel):
        load_labels(p)


def test_labels_sorted_and_numbered(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("scan,50,60\nmitm,0,10\nnormal,10,50\n")
    spans = load_labels(p)
    assert [s.t_start for s in spans] == [0.0, 50.0]
    assert len({s.event_id for s in spans}) == 2


def test_label_of_cases():
    spans = make_spans([(0, 10, EventLabel.DoS), (20, 40, EventLabel.MiTM), (30, 50, EventLabel.PhysicalFault)])
    assert label_of(5, spans) is EventLabel.DoS
    assert label_of(15, spans) is EventLabel.Normal
    assert label_of(35, spans) is EventLabel.MiTM       # attack beats fault
    assert label_of(45, spans) is EventLabel.PhysicalFault
    assert label_of(10, spans) is EventLabel.Normal     # half-open span


@given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
def test_label_of_total(t):
    spans = make_spans([(0, 10, EventLabel.DoS), (5, 15, EventLabel.Scanning), (8, 30, EventLabel.PhysicalFault)])
    lab = label_of(t, spans)
    assert lab in set(EventLabel)
    assert SpanIndex(spans).label_at(t) is lab


# -- round trip and throughput ------------------------------------------------

_opt_text = st.one_of(st.none(), st.sampled_from(["192.168.1.1", "10.0.0.7", "TCP", "ARP", "SYN", "ACK,PSH"]))
_opt_port = st.one_of(st.none(), st.integers(0, 65535))
_opt_nonneg = st.one_of(st.none(), st.integers(0, 10_000))
_packet = st.builds(
    PacketRecord,
    ts=st.floats(0, 2e9, allow_nan=False, allow_infinity=False),
    ip_src=_opt_text, ip_dst=_opt_text,
    mac_src=st.one_of(st.none(), st.just("00:11:22:33:44:55")), mac_dst=st.one_of(st.none(), st.just("ff:ff:ff:ff:ff:ff")),
    port_src=_opt_port, port_dst=_opt_port, protocol=_opt_text, tcp_flags=_opt_text,
    payload_size=_opt_nonneg, modbus_fn=st.one_of(st.none(), st.integers(1, 127)),
    modbus_resp=st.one_of(st.none(), st.floats(-1e6, 1e6, allow_nan=False)),
    n_pkts_src=_opt_nonneg, n_pkts_dst=_opt_nonneg,
)


@settings(max_examples=60, deadline=None)
@given(st.lists(_packet, min_size=1, max_size=20))
def test_packet_round_trip(tmp_path_factory, records):
    path = tmp_path_factory.mktemp("rt") / "p.csv"
    write_packets(records, path)
    again = load_packets(path)
    assert again == sorted(records, key=lambda r: r.ts)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=12, max_size=12),
       st.lists(st.integers(0, 1), min_size=28, max_size=28), st.integers(1, 20))
def test_physical_round_trip(tmp_path_factory, reals, bins, n):
    recs = [PhysicalRecord(float(1000 + i), tuple(reals[:8]), tuple(bins[:6]), tuple(reals[8:]), tuple(bins[6:]))
            for i in range(n)]
    path = tmp_path_factory.mktemp("rt") / "ph.csv"
    write_physical(recs, path)
    assert load_physical(path) == recs


def test_parse_throughput_at_least_2633_per_second(tmp_path):
    n = 2633 * 8
    recs = [PacketRecord(1000 + i / 2633, "192.168.1.10", "192.168.1.11", "00:1d:9c:c8:00:10",
                         "00:1d:9c:c8:00:11", 50201, 502, "MODBUS", "PSH,ACK", 12, 3, float(i % 16), 20, 10)
            for i in range(n)]
    path = tmp_path / "big.csv"
    write_packets(recs, path)
    t0 = time.perf_counter()
    out = load_packets(path)
    rate = n / (time.perf_counter() - t0)
    assert len(out) == n
    assert rate >= 2633, f"{rate:.0f} packets/s"


def test_event_span_rejects_empty_interval():
    with pytest.raises(ValueError):
        EventSpan(EventLabel.DoS, 5, 5)
    assert not math.isnan(EventSpan(EventLabel.DoS, 0, 1).duration)
