"""Desk-scale synthetic dataset: packets, physical snapshots and event labels.

The physical side is a cyclic eight-tank process: each tank's pressure is a
triangle wave with a per-tank phase offset, pumps run while their tank
fills, flow sensors follow the pumps and a few valves follow the emptying
phase (the remaining valves never move). The network side is a SCADA
master polling four PLCs over MODBUS/TCP with a static address plan.

Injected events:

* DoS: a SYN flood from an attacker host to one PLC
* MiTM: traffic to and from one PLC relayed through the attacker's MAC,
  with altered register values in part of the responses
* Scanning: a SYN port sweep across the PLCs, answered by resets
* physical fault: a pump breakdown with a draining tank; network traffic
  is left as in normal operation
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .ingest import (
    N_FLOW, N_PRESSURE, N_PUMP, N_VALVE,
    EventLabel, EventSpan, PacketRecord, PhysicalRecord,
    make_spans, write_packets, write_physical,
)

SCADA = ("192.168.1.10", "00:1d:9c:c8:00:10")
PLCS = [(f"192.168.1.{11 + k}", f"00:1d:9c:c8:00:{11 + k}") for k in range(4)]
ATTACKER = ("192.168.1.66", "00:0c:29:3e:5a:66")
CLIENT_PORTS = [50201, 50202, 50203, 50204]
REGISTER_VALUES = list(range(16))


@dataclass(frozen=True)
class SynthConfig:
    duration: int = 1400
    start_ts: int = 1_600_000_000
    period: int = 120
    lead_in: int = 360
    baseline_rate: float = 10.0        # MODBUS transactions per second (3 packets each)
    dos_rate: float = 360.0            # flood packets per second
    scan_rate: float = 40.0
    mitm_alter_frac: float = 0.5
    dos_target: int = 0                # index of the flooded PLC
    mitm_target: int = 1               # index of the PLC whose traffic is relayed
    fault_tank: int = 2                # index of the tank whose pump breaks down
    n_dos: int = 5
    n_mitm: int = 5
    n_fault: int = 6
    n_scan: int = 5
    dur_dos: int = 15
    dur_mitm: int = 30
    dur_fault: int = 30
    dur_scan: int = 8
    min_gap: int = 10
    noise: float = 0.01
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def schedule_events(cfg: SynthConfig, rng) -> list[EventSpan]:
    kinds = ([EventLabel.DoS] * cfg.n_dos + [EventLabel.MiTM] * cfg.n_mitm
             + [EventLabel.PhysicalFault] * cfg.n_fault + [EventLabel.Scanning] * cfg.n_scan)
    durations = {EventLabel.DoS: cfg.dur_dos, EventLabel.MiTM: cfg.dur_mitm,
                 EventLabel.PhysicalFault: cfg.dur_fault, EventLabel.Scanning: cfg.dur_scan}
    order = [kinds[i] for i in rng.permutation(len(kinds))]
    busy = sum(durations[k] for k in order)
    slack = cfg.duration - cfg.lead_in - busy - cfg.min_gap * (len(order) + 1)
    if slack < 0:
        raise ValueError("synthetic duration too short for the requested events")
    extra = rng.dirichlet(np.ones(len(order) + 1)) * slack
    t = cfg.start_ts + cfg.lead_in
    items = []
    for k, e in zip(order, extra):
        t += cfg.min_gap + int(e)
        items.append((t, t + durations[k], k))
        t += durations[k]
    return make_spans(items)


def _triangle(phase: np.ndarray) -> np.ndarray:
    """0 -> 1 over the first half of the cycle, back to 0 over the second."""
    phase = np.mod(phase, 1.0)
    return np.where(phase < 0.5, 2 * phase, 2 - 2 * phase)


def generate_physical(cfg: SynthConfig, spans, rng) -> list[PhysicalRecord]:
    t = np.arange(cfg.duration)
    ts = cfg.start_ts + t
    phase = t[:, None] / cfg.period - np.arange(N_PRESSURE)[None, :] / N_PRESSURE
    level = _triangle(phase)
    pressure = 2.0 + 1.0 * level + rng.normal(0, cfg.noise, level.shape)
    filling = (np.mod(phase, 1.0) < 0.5).astype(int)
    pumps = filling[:, :N_PUMP].copy()
    flow = 4.0 * pumps[:, :N_FLOW] + 0.2 + rng.normal(0, cfg.noise, (cfg.duration, N_FLOW))
    valves = np.zeros((cfg.duration, N_VALVE), dtype=int)
    valves[:, :N_PRESSURE] = 1 - filling
    valves[:, N_PRESSURE:N_PRESSURE + 4] = 1

    faults = [s for s in spans if s.label is EventLabel.PhysicalFault]
    tank = cfg.fault_tank
    for s in faults:
        i0, i1 = int(s.t_start - cfg.start_ts), int(s.t_end - cfg.start_ts)
        p0 = pressure[i0, tank]
        k = np.arange(i1 - i0)
        pressure[i0:i1, tank] = 0.05 + (p0 - 0.05) * np.exp(-k / 3.0) + rng.normal(0, cfg.noise, len(k))
        pumps[i0:i1, tank] = 0
        flow[i0:i1, tank] = rng.normal(0, cfg.noise, len(k))
        valves[i0:i1, tank] = 0

    return [
        PhysicalRecord(float(ts[i]), tuple(np.round(pressure[i], 6).tolist()), tuple(int(v) for v in pumps[i]),
                       tuple(np.round(flow[i], 6).tolist()), tuple(int(v) for v in valves[i]))
        for i in range(cfg.duration)
    ]


def _modbus_exchange(t, plc, port, fn, value, mitm):
    """Request, response and ACK of one polling transaction."""
    (ip_m, mac_m), (ip_p, mac_p) = SCADA, PLCS[plc]
    mac_to_plc = ATTACKER[1] if mitm else mac_p
    mac_from_plc = ATTACKER[1] if mitm else mac_p
    req = dict(ts=t, ip_src=ip_m, ip_dst=ip_p, mac_src=mac_m, mac_dst=mac_to_plc, port_src=port,
               port_dst=502, protocol="MODBUS", tcp_flags="PSH,ACK", payload_size=12, modbus_fn=fn)
    resp = dict(ts=t + 0.004, ip_src=ip_p, ip_dst=ip_m, mac_src=mac_from_plc, mac_dst=mac_m, port_src=502,
                port_dst=port, protocol="MODBUS", tcp_flags="PSH,ACK",
                payload_size=11 if fn == 3 else 12, modbus_fn=fn, modbus_resp=float(value))
    ack = dict(ts=t + 0.006, ip_src=ip_m, ip_dst=ip_p, mac_src=mac_m, mac_dst=mac_to_plc, port_src=port,
               port_dst=502, protocol="TCP", tcp_flags="ACK", payload_size=0)
    return [req, resp, ack]


def generate_packets(cfg: SynthConfig, spans, rng) -> list[PacketRecord]:
    by_second: dict[int, EventSpan] = {}
    for s in spans:
        for sec in range(int(s.t_start), int(s.t_end)):
            by_second[sec] = s
    scan_cursor = defaultdict(int)
    raw = []
    for sec in range(cfg.start_ts, cfg.start_ts + cfg.duration):
        ev = by_second.get(sec)
        for _ in range(rng.poisson(cfg.baseline_rate)):
            t = sec + rng.random() * 0.99
            plc = int(rng.integers(0, 4))
            fn = 3 if rng.random() < 0.85 else 16
            value = REGISTER_VALUES[int(rng.integers(0, len(REGISTER_VALUES)))]
            mitm = ev is not None and ev.label is EventLabel.MiTM and cfg.mitm_target == plc
            if mitm and fn == 3 and rng.random() < cfg.mitm_alter_frac:
                value = 100 + int(rng.integers(0, 50))
            for p in _modbus_exchange(t, plc, CLIENT_PORTS[plc], fn, value, mitm):
                if p["ts"] < sec + 1:
                    raw.append(p)
        if rng.random() < 0.2:
            raw.append(dict(ts=sec + rng.random(), mac_src=SCADA[1], mac_dst="ff:ff:ff:ff:ff:ff",
                            protocol="ARP", payload_size=28))
        if ev is None:
            continue
        if ev.label is EventLabel.DoS:
            ip_p, mac_p = PLCS[cfg.dos_target]
            n = rng.poisson(cfg.dos_rate)
            for t, sport in zip(sec + np.sort(rng.random(n)), rng.integers(1024, 65536, n)):
                raw.append(dict(ts=float(t), ip_src=ATTACKER[0], ip_dst=ip_p, mac_src=ATTACKER[1], mac_dst=mac_p,
                                port_src=int(sport), port_dst=502, protocol="TCP", tcp_flags="SYN", payload_size=0))
        elif ev.label is EventLabel.Scanning:
            n = rng.poisson(cfg.scan_rate)
            for t in sec + np.sort(rng.random(n)):
                k = scan_cursor[ev.event_id]
                scan_cursor[ev.event_id] += 1
                ip_p, mac_p = PLCS[k % 4]
                dport = 1 + (k // 4) % 1024
                raw.append(dict(ts=float(t), ip_src=ATTACKER[0], ip_dst=ip_p, mac_src=ATTACKER[1], mac_dst=mac_p,
                                port_src=40000 + k % 7, port_dst=dport, protocol="TCP", tcp_flags="SYN",
                                payload_size=0))
                if dport != 502 and t + 0.001 < sec + 1:
                    raw.append(dict(ts=float(t) + 0.001, ip_src=ip_p, ip_dst=ATTACKER[0], mac_src=mac_p,
                                    mac_dst=ATTACKER[1], port_src=dport, port_dst=40000 + k % 7, protocol="TCP",
                                    tcp_flags="RST,ACK", payload_size=0))
    raw.sort(key=lambda p: p["ts"])
    return _with_device_counts(raw)


def _with_device_counts(raw: list[dict]) -> list[PacketRecord]:
    """Fill in packets sent by the source / destination device during the last two seconds."""
    sent: dict[str, deque] = defaultdict(deque)
    out = []
    for p in raw:
        t = p["ts"]
        src = p.get("ip_src") or p.get("mac_src")
        dst = p.get("ip_dst") or p.get("mac_dst")
        q = sent[src]
        q.append(t)
        for dev in (src, dst):
            dq = sent[dev]
            while dq and dq[0] <= t - 2.0:
                dq.popleft()
        p = dict(p, ts=round(t, 6), n_pkts_src=len(sent[src]), n_pkts_dst=len(sent[dst]))
        out.append(PacketRecord(**p))
    return out


def generate(cfg: SynthConfig):
    """Return ``(packets, physical, spans)``."""
    rng = np.random.default_rng(cfg.seed)
    spans = schedule_events(cfg, rng)
    physical = generate_physical(cfg, spans, rng)
    packets = generate_packets(cfg, spans, rng)
    return packets, physical, spans


FAULT_NAMES = ("leak", "pump_breakdown")


def write_dataset(cfg: SynthConfig, out_dir) -> dict[str, Path]:
    """Write ``packets.csv``, ``physical.csv`` and ``labels.csv`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    packets, physical, spans = generate(cfg)
    paths = {"packets": out / "packets.csv", "physical": out / "physical.csv", "labels": out / "labels.csv"}
    write_packets(packets, paths["packets"])
    write_physical(physical, paths["physical"])
    # fault rows carry the raw event kind; ingestion folds them into one class
    with paths["labels"].open("w") as handle:
        handle.write("label,start,end\n")
        n_fault = 0
        for s in spans:
            name = s.label.name
            if s.label is EventLabel.PhysicalFault:
                name = FAULT_NAMES[n_fault % 2]
                n_fault += 1
            handle.write(f"{name},{s.t_start!r},{s.t_end!r}\n")
    return paths
