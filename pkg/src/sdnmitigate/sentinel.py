"""Protection-system analysis: RTT probing, mirror-tap statistics,
attack classification and attacker identification."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .engine import US_PER_S, EventHandle, Simulator, seconds
from .topology import (
    HEADER_FRAGMENT, HTTP_GET, HTTP_RESPONSE, POST_FRAGMENT, TLS_RENEGOTIATE,
    HostAddr, Kind, Packet, Payload, Role, Switch,
)

OK = "ok"
TIMEOUT = "timeout"
REFUSED = "refused"


@dataclass(frozen=True)
class SentinelConfig:
    """Every detection threshold. Capacity estimates default to ``None`` and
    are then filled from the operator's knowledge of the server."""

    threshold_factor: float = 5.0
    consecutive_needed: int = 5
    probe_interval_s: float = 1.0
    probe_timeout_s: float = 4.0
    warmup_probes: int = 10
    window_s: float = 10.0
    clear_windows: int = 3
    syn_ratio: float = 0.5
    spike_factor: float = 3.0
    slow_fraction: float = 0.5
    slow_gap_s: float = 5.0
    table_capacity_estimate: Optional[int] = None
    sustainable_heavy_rate: Optional[float] = None
    http_factor: float = 3.0
    tls_rate: float = 10.0
    syn_half_open_min: int = 3
    heavy_rate_min: float = 2.0
    renegotiations_min: int = 5
    incomplete_min: int = 3
    gap_cv_max: float = 0.5
    min_gaps: int = 3

    def __post_init__(self):
        for name, value in vars(self).items():
            if value is not None and value <= 0:
                raise ValueError(f"thresholds.{name} must be positive, got {value}")


# ---------------------------------------------------------------------------
# probing


@dataclass(frozen=True)
class ProbeOutcome:
    issued_at: int
    resolved_at: int
    status: str
    rtt: Optional[int] = None  # microseconds

    @property
    def rtt_s(self) -> Optional[float]:
        return None if self.rtt is None else self.rtt / US_PER_S


@dataclass
class ProbeState:
    threshold_factor: float = 5.0
    consecutive_needed: int = 5
    probe_interval_s: float = 1.0
    probe_timeout_s: float = 4.0
    baseline_rtt_s: Optional[float] = None
    history: deque = field(default_factory=lambda: deque(maxlen=4096))
    # outcomes since the alarm last un-latched
    recent: deque = field(default_factory=lambda: deque(maxlen=64))

    @property
    def threshold_s(self) -> Optional[float]:
        if self.baseline_rtt_s is None:
            return None
        return self.threshold_factor * self.baseline_rtt_s

    def exceeds(self, outcome: ProbeOutcome) -> bool:
        if outcome.status != OK:
            return True
        return outcome.rtt_s > self.threshold_s

    def record(self, outcome: ProbeOutcome) -> None:
        self.history.append(outcome)
        self.recent.append(outcome)


class Prober:
    """External RTT prober: one light GET per interval through the full
    handshake. Refusals and timeouts are outcomes too."""

    def __init__(self, sim: Simulator, switch: Switch, addr: HostAddr, server: HostAddr,
                 state: ProbeState | None = None, start_offset: int = 500_000):
        self.sim = sim
        self.switch = switch
        self.addr = addr
        self.server = server
        self.state = state or ProbeState()
        self.interval = seconds(self.state.probe_interval_s)
        self.timeout = seconds(self.state.probe_timeout_s)
        self.next_port = 20_000
        self.outstanding: dict[int, tuple[int, EventHandle, bool]] = {}
        self.listeners: list[Callable[[ProbeOutcome], None]] = []
        switch.attach(addr, self.receive)
        sim.register("prober", self._dispatch)
        sim.schedule(start_offset, "prober", ("tick",))

    def _dispatch(self, payload) -> None:
        if payload[0] == "tick":
            self.probe_tick(self.sim.now)
            self.sim.schedule_in(self.interval, "prober", ("tick",))
        else:
            self._expire(payload[1])

    def _send(self, port: int, kind: Kind, payload: Payload | None = None, size: int = 40) -> None:
        self.switch.forward(Packet(self.sim.now, self.addr, self.server, port, 80, kind, payload, size))

    def probe_tick(self, now: int) -> None:
        port = self.next_port
        self.next_port = 20_000 + (port - 19_999) % 40_000
        timer = self.sim.schedule(now + self.timeout, "prober", ("timeout", port))
        self.outstanding[port] = (now, timer, False)
        self._send(port, Kind.SYN)

    def receive(self, pkt: Packet) -> None:
        entry = self.outstanding.get(pkt.dst_port)
        if entry is None:
            return
        issued, timer, established = entry
        if pkt.kind is Kind.SYN_ACK and not established:
            self._send(pkt.dst_port, Kind.ACK)
            self._send(pkt.dst_port, Kind.DATA, Payload(HTTP_GET, "light"), 300)
            self.outstanding[pkt.dst_port] = (issued, timer, True)
        elif pkt.kind is Kind.DATA and pkt.payload.kind == HTTP_RESPONSE:
            self._resolve(pkt.dst_port, OK, self.sim.now - issued)
        elif pkt.kind is Kind.RST:
            self._resolve(pkt.dst_port, REFUSED)

    def _expire(self, port: int) -> None:
        entry = self.outstanding.get(port)
        if entry is None:
            return
        if entry[2]:
            self._send(port, Kind.RST)
        self._resolve(port, TIMEOUT)

    def _resolve(self, port: int, status: str, rtt: int | None = None) -> None:
        issued, timer, _ = self.outstanding.pop(port)
        self.sim.cancel(timer)
        outcome = ProbeOutcome(issued, self.sim.now, status, rtt)
        self.state.record(outcome)
        for fn in self.listeners:
            fn(outcome)


# ---------------------------------------------------------------------------
# statistics


@dataclass
class SourceStats:
    syn_count: int = 0
    ack_count: int = 0
    data_count: int = 0
    half_open_live: int = 0
    requests_heavy: int = 0
    renegotiations: int = 0
    incomplete_connections: int = 0
    incomplete_header: int = 0
    incomplete_body: int = 0
    gap_mean_s: Optional[float] = None
    gap_cv: Optional[float] = None
    bytes: int = 0

    def snapshot(self) -> dict:
        return asdict(self)


COUNTER_FIELDS = ("syn_count", "ack_count", "data_count", "half_open_live",
                  "requests_heavy", "renegotiations", "bytes")


@dataclass
class WindowAggregate:
    total_packets: int = 0
    total_syns: int = 0
    packet_rate_pps: float = 0.0
    baseline_packet_rate_pps: Optional[float] = None
    slow_header_connections: int = 0
    slow_body_connections: int = 0
    heavy_request_rate: float = 0.0
    renegotiation_rate: float = 0.0

    @property
    def slow_connection_count(self) -> int:
        return self.slow_header_connections + self.slow_body_connections


@dataclass(frozen=True)
class DetectionEvent:
    at: int
    attack_class: str
    attackers: tuple[HostAddr, ...]
    evidence: dict

    def __post_init__(self):
        if not self.attackers:
            raise ValueError("a detection event names at least one attacker")


class _Entry:
    """One inbound packet inside the sliding window."""

    __slots__ = ("t", "src", "code", "size", "acked")

    def __init__(self, t, src, code, size):
        self.t = t
        self.src = src
        self.code = code
        self.size = size
        self.acked = False


class _Conn:
    """Sentinel-side view of a connection carrying an unfinished request."""

    __slots__ = ("src", "phase", "data_times")

    def __init__(self, src, phase):
        self.src = src
        self.phase = phase
        self.data_times: deque = deque(maxlen=17)


def gap_samples(data_times, now: int) -> list[int]:
    """Inter-fragment gaps of one connection.

    Before a second fragment arrives, the silence since the first one
    stands in as a provisional gap.
    """
    times = list(data_times)
    if len(times) >= 2:
        return [b - a for a, b in zip(times, times[1:])]
    return [now - times[-1]]


def gap_summary(samples: list[int], min_gaps: int) -> tuple[Optional[float], Optional[float]]:
    if len(samples) < min_gaps:
        return None, None
    arr = np.asarray(samples, dtype=float) / US_PER_S
    mean = float(arr.mean())
    cv = float(arr.std() / mean) if mean > 0 else math.inf
    return mean, cv


def _code(pkt: Packet) -> str:
    kind = pkt.kind
    if kind is Kind.DATA:
        p = pkt.payload
        if p.kind == HTTP_GET and p.target == "heavy":
            return "heavy"
        if p.kind == TLS_RENEGOTIATE:
            return "reneg"
        return "data"
    return kind.value


class Sentinel:
    """Observe, classify, identify; re-evaluated every second.

    ``emit`` receives each DetectionEvent; ``log`` receives
    ``(time_us, event, attack_class, addresses, detail)`` tuples.
    """

    def __init__(self, sim: Simulator, switch: Switch, victim: HostAddr, prober: Prober,
                 cfg: SentinelConfig, warmup_s: float,
                 emit: Callable[[DetectionEvent], None] | None = None,
                 log: Callable[..., None] | None = None,
                 keep_mirror_log: bool = False):
        if cfg.table_capacity_estimate is None or cfg.sustainable_heavy_rate is None:
            raise ValueError("sentinel needs table_capacity_estimate and sustainable_heavy_rate")
        self.sim = sim
        self.victim = victim
        self.cfg = cfg
        self.prober = prober
        self.probe = prober.state
        self.warmup = seconds(warmup_s)
        self.window = seconds(cfg.window_s)
        self.emit = emit or (lambda ev: None)
        self.log = log or (lambda *a: None)

        self._entries: deque[_Entry] = deque()
        self._counts: dict[HostAddr, dict[str, int]] = {}
        self._last_syn: dict[tuple[HostAddr, int], _Entry] = {}
        self._conns: dict[tuple[HostAddr, int], _Conn] = {}
        self.verified: set[HostAddr] = set()
        self.reported: set[HostAddr] = set()
        self._since_tick = 0
        self._warmup_packets = 0
        self.baseline_packet_rate: Optional[float] = None

        self.latched = False
        self.clear_streak = 0
        self.indeterminate_checks = 0
        self.events: list[DetectionEvent] = []
        self.classifications: list[tuple[int, frozenset]] = []
        self.mirror_log: list[tuple[int, Packet]] | None = [] if keep_mirror_log else None

        switch.set_tap(self.observe)
        sim.register("sentinel", self._tick)
        sim.schedule(US_PER_S, "sentinel", None)

    # observation

    def observe(self, pkt: Packet) -> None:
        now = self.sim.now
        if self.mirror_log is not None:
            self.mirror_log.append((now, pkt))
        if pkt.dst == self.victim:
            self._inbound(pkt, now)
        elif pkt.src == self.victim:
            self._outbound(pkt)

    def _inbound(self, pkt: Packet, now: int) -> None:
        src = pkt.src
        code = _code(pkt)
        entry = _Entry(now, src, code, pkt.size_bytes)
        self._entries.append(entry)
        counts = self._counts.get(src)
        if counts is None:
            counts = self._counts[src] = dict.fromkeys(COUNTER_FIELDS, 0)
        counts["bytes"] += pkt.size_bytes
        self._since_tick += 1
        if now < self.warmup:
            self._warmup_packets += 1
        key = (src, pkt.src_port)
        kind = pkt.kind
        if kind is Kind.SYN:
            counts["syn_count"] += 1
            counts["half_open_live"] += 1
            self._last_syn[key] = entry
            self._conns.pop(key, None)
        elif kind is Kind.ACK:
            counts["ack_count"] += 1
            syn = self._last_syn.pop(key, None)
            if syn is not None:
                self.verified.add(src)
                if not syn.acked:
                    syn.acked = True
                    counts["half_open_live"] -= 1
        elif kind is Kind.DATA:
            counts["data_count"] += 1
            if code == "heavy":
                counts["requests_heavy"] += 1
            elif code == "reneg":
                counts["renegotiations"] += 1
            self._track_request(key, pkt.payload, now)
        else:  # FIN / RST from the client
            self._conns.pop(key, None)
            self._last_syn.pop(key, None)

    def _track_request(self, key, p: Payload, now: int) -> None:
        conn = self._conns.get(key)
        if p.kind == HEADER_FRAGMENT:
            if p.final and not p.post:
                self._conns.pop(key, None)
                return
            if conn is None:
                conn = self._conns[key] = _Conn(key[0], "header")
            if p.final:
                conn.phase = "body"
            conn.data_times.append(now)
        elif p.kind == POST_FRAGMENT and conn is not None:
            if p.final:
                del self._conns[key]
                return
            conn.data_times.append(now)
        elif conn is not None:
            del self._conns[key]

    def _outbound(self, pkt: Packet) -> None:
        if pkt.kind is Kind.RST or pkt.kind is Kind.FIN or (
                pkt.kind is Kind.DATA and pkt.payload.kind == HTTP_RESPONSE):
            key = (pkt.dst, pkt.dst_port)
            self._conns.pop(key, None)

    def _evict(self, now: int) -> None:
        horizon = now - self.window
        entries = self._entries
        counts = self._counts
        while entries and entries[0].t <= horizon:
            e = entries.popleft()
            c = counts[e.src]
            c["bytes"] -= e.size
            code = e.code
            if code == "SYN":
                c["syn_count"] -= 1
                if not e.acked:
                    c["half_open_live"] -= 1
                    e.acked = True  # no longer counted
            elif code == "ACK":
                c["ack_count"] -= 1
            elif code in ("data", "heavy", "reneg"):
                c["data_count"] -= 1
                if code == "heavy":
                    c["requests_heavy"] -= 1
                elif code == "reneg":
                    c["renegotiations"] -= 1
            if not any(c.values()):
                del counts[e.src]
        # forget handshakes too old to matter
        if len(self._last_syn) > 4 * len(entries) + 1024:
            self._last_syn = {k: e for k, e in self._last_syn.items() if e.t > horizon}

    # derived statistics

    def source_stats(self, now: int | None = None) -> dict[HostAddr, SourceStats]:
        """Current statistics for every source seen in the window or holding
        an unfinished request."""
        now = self.sim.now if now is None else now
        self._evict(now)
        stats: dict[HostAddr, SourceStats] = {}
        for src, c in self._counts.items():
            stats[src] = SourceStats(**c)
        gaps: dict[HostAddr, list[int]] = {}
        for conn in self._conns.values():
            s = stats.get(conn.src)
            if s is None:
                s = stats[conn.src] = SourceStats()
            s.incomplete_connections += 1
            if conn.phase == "header":
                s.incomplete_header += 1
            else:
                s.incomplete_body += 1
            gaps.setdefault(conn.src, []).extend(gap_samples(conn.data_times, now))
        for src, samples in gaps.items():
            stats[src].gap_mean_s, stats[src].gap_cv = gap_summary(samples, self.cfg.min_gaps)
        return stats

    def aggregate(self, now: int | None = None) -> WindowAggregate:
        now = self.sim.now if now is None else now
        self._evict(now)
        w = self.cfg.window_s
        agg = WindowAggregate(baseline_packet_rate_pps=self.baseline_packet_rate)
        for c in self._counts.values():
            agg.total_syns += c["syn_count"]
            agg.heavy_request_rate += c["requests_heavy"]
            agg.renegotiation_rate += c["renegotiations"]
        agg.total_packets = len(self._entries)
        agg.heavy_request_rate /= w
        agg.renegotiation_rate /= w
        agg.packet_rate_pps = float(self._since_tick)
        slow_gap = seconds(self.cfg.slow_gap_s)
        for conn in self._conns.values():
            if conn.src in self.reported:
                continue
            samples = gap_samples(conn.data_times, now)
            if sum(samples) >= slow_gap * len(samples):
                if conn.phase == "header":
                    agg.slow_header_connections += 1
                else:
                    agg.slow_body_connections += 1
        return agg

    # decisions

    def alarm_check(self, probe: ProbeState | None = None) -> bool:
        probe = probe or self.probe
        if probe.baseline_rtt_s is None:
            self.indeterminate_checks += 1
            return False
        k = probe.consecutive_needed
        recent = list(probe.recent)[-k:]
        return len(recent) == k and all(probe.exceeds(o) for o in recent)

    def classify(self, agg: WindowAggregate) -> set[str]:
        cfg = self.cfg
        found = set()
        if (agg.total_packets > 0 and agg.baseline_packet_rate_pps is not None
                and agg.total_syns / agg.total_packets > cfg.syn_ratio
                and agg.packet_rate_pps > cfg.spike_factor * agg.baseline_packet_rate_pps):
            found.add("syn_flood")
        slow_needed = cfg.slow_fraction * cfg.table_capacity_estimate
        if agg.slow_header_connections >= slow_needed:
            found.add("slow_header")
        if agg.slow_body_connections >= slow_needed:
            found.add("slow_body")
        if agg.heavy_request_rate > cfg.http_factor * cfg.sustainable_heavy_rate:
            found.add("http_flood")
        if agg.renegotiation_rate > cfg.tls_rate:
            found.add("tls_flood")
        return found

    def identify(self, attack_class: str, stats: dict[HostAddr, SourceStats]) -> list[HostAddr]:
        cfg = self.cfg
        w = cfg.window_s
        out = []
        for src, s in stats.items():
            if src in self.reported or src.role is Role.PROBER:
                continue
            if attack_class == "syn_flood":
                hit = s.half_open_live >= cfg.syn_half_open_min and src not in self.verified
            elif attack_class == "http_flood":
                hit = s.requests_heavy / w > cfg.heavy_rate_min
            elif attack_class == "tls_flood":
                hit = s.renegotiations >= cfg.renegotiations_min
            elif attack_class in ("slow_header", "slow_body"):
                n = s.incomplete_header if attack_class == "slow_header" else s.incomplete_body
                hit = (n >= cfg.incomplete_min and s.gap_mean_s is not None
                       and s.gap_mean_s >= cfg.slow_gap_s and s.gap_cv <= cfg.gap_cv_max)
            else:
                raise ValueError(f"unknown attack class {attack_class!r}")
            if hit:
                out.append(src)
        return sorted(out, key=lambda a: a.value)

    # periodic re-evaluation

    def _tick(self, _payload) -> None:
        self.window_tick(self.sim.now)
        self.sim.schedule_in(US_PER_S, "sentinel", None)

    def _update_baselines(self, now: int) -> None:
        if now < self.warmup:
            return
        if self.baseline_packet_rate is None:
            self.baseline_packet_rate = self._warmup_packets / (self.warmup / US_PER_S)
        if self.probe.baseline_rtt_s is None:
            warm = [o for o in self.probe.history if o.resolved_at < self.warmup]
            ok = [o.rtt_s for o in warm if o.status == OK]
            if len(warm) >= self.cfg.warmup_probes and ok:
                self.probe.baseline_rtt_s = float(np.mean(ok))

    def window_tick(self, now: int) -> Optional[DetectionEvent]:
        self._update_baselines(now)
        agg = self.aggregate(now)
        self._since_tick = 0
        first = None
        if not self.latched and self.alarm_check():
            self.latched = True
            self.clear_streak = 0
            self.log(now, "ALARM", "", [], f"threshold_s={self.probe.threshold_s:.6f}")
        if self.latched:
            classes = self.classify(agg)
            self.classifications.append((now, frozenset(classes)))
            if not classes:
                self.clear_streak += 1
                self.log(now, "UNKNOWN", "", [], f"clear_windows={self.clear_streak}")
                if self.clear_streak >= self.cfg.clear_windows:
                    self.latched = False
                    self.clear_streak = 0
                    self.probe.recent.clear()
                    self.log(now, "ALL_CLEAR", "", [], "")
                return None
            self.clear_streak = 0
            stats = self.source_stats(now)
            for cls in sorted(classes):
                attackers = self.identify(cls, stats)
                if not attackers:
                    continue
                self.reported.update(attackers)
                ev = DetectionEvent(now, cls, tuple(attackers),
                                    {str(a): stats[a].snapshot() for a in attackers})
                self.events.append(ev)
                self.log(now, "DETECT", cls, attackers, "")
                self.emit(ev)
                first = first or ev
        return first
