"""The attacked web server.

TCP handshake with a bounded connection table, HTTP request assembly with
header/body timeouts, TLS handshake costs, and a single FIFO CPU whose
backlog sets the response time.
"""

from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .engine import US_PER_S, EventHandle, Simulator, seconds
from .topology import (
    HEADER_FRAGMENT, HTTP_GET, HTTP_RESPONSE, POST_FRAGMENT, TLS_HANDSHAKE, TLS_RENEGOTIATE,
    HostAddr, Kind, Packet, Payload, Switch,
)


@dataclass(frozen=True)
class ServerConfig:
    table_capacity: int = 256
    syn_timeout_s: float = 30.0
    header_timeout_s: float = 300.0
    body_timeout_s: float = 300.0
    cpu_capacity_ups: float = 100.0
    heavy_request_cost: float = 10.0
    light_request_cost: float = 1.0
    tls_handshake_cost: float = 5.0
    cpu_queue_limit: int = 1000

    def __post_init__(self):
        for name, value in vars(self).items():
            if value <= 0:
                raise ValueError(f"server.{name} must be positive, got {value}")
        if self.heavy_request_cost < self.light_request_cost:
            raise ValueError("server.heavy_request_cost must be >= light_request_cost")

    def request_cost(self, target: str) -> float:
        return self.heavy_request_cost if target == "heavy" else self.light_request_cost

    @property
    def sustainable_heavy_rate(self) -> float:
        return self.cpu_capacity_ups / self.heavy_request_cost


class Phase(str, Enum):
    SYN_RECEIVED = "SYN_RECEIVED"
    ESTABLISHED = "ESTABLISHED"
    RECEIVING_HEADER = "RECEIVING_HEADER"
    RECEIVING_BODY = "RECEIVING_BODY"
    QUEUED = "QUEUED"
    PROCESSING = "PROCESSING"
    CLOSED = "CLOSED"


GAP_HISTORY = 16


@dataclass(eq=False)
class ConnectionRecord:
    key: tuple[HostAddr, int]
    phase: Phase
    opened_at: int
    last_packet_at: int
    timer: Optional[EventHandle] = None
    inter_packet_gaps: deque = field(default_factory=lambda: deque(maxlen=GAP_HISTORY))
    target: str = "light"
    last_data_at: Optional[int] = None


@dataclass(eq=False)
class Job:
    record: ConnectionRecord
    cost: float
    kind: str  # "http" or "tls"
    enqueued_at: int
    started_at: Optional[int] = None


# reactions
SYN_ACK_SENT = "syn_ack_sent"
REJECTED_FULL = "rejected_full"
DUPLICATE = "duplicate"
ESTABLISHED = "established"
IGNORED = "ignored"
NEED_MORE = "need_more"
REQUEST_QUEUED = "request_queued"
TLS_RENEGOTIATED = "tls_renegotiated"
PROTOCOL_ERROR = "protocol_error"
QUEUE_REJECTED = "queue_rejected"
FREED = "freed"


@dataclass
class VictimSample:
    occupancy: int
    cpu_utilization: float
    rejected_count: int
    timeout_counts: dict[str, int]


class Victim:
    """Web server host attached to the switch at ``addr``."""

    def __init__(self, sim: Simulator, switch: Switch, addr: HostAddr,
                 config: ServerConfig | None = None, port: int = 80):
        self.sim = sim
        self.switch = switch
        self.addr = addr
        self.port = port
        self.cfg = config or ServerConfig()
        self.table: dict[tuple[HostAddr, int], ConnectionRecord] = {}
        self.queue: deque[Job] = deque()
        self.current: Optional[Job] = None
        self._completion: Optional[EventHandle] = None

        self.counters: Counter = Counter()
        self.received = 0
        self.closed: Counter = Counter()  # reason -> count, for conservation checks
        self.units_enqueued = 0.0
        self.units_completed = 0.0
        self.service_spans: list[tuple[float, int]] = []  # (cost, completed - enqueued)
        self.peak_occupancy = 0
        self.first_full_at: Optional[int] = None

        self._busy_start: Optional[int] = None
        self._busy_accum = 0
        self._last_sample = 0
        self._rejected_since = 0
        self._timeouts_since: Counter = Counter()

        self._syn_timeout = seconds(self.cfg.syn_timeout_s)
        self._header_timeout = seconds(self.cfg.header_timeout_s)
        self._body_timeout = seconds(self.cfg.body_timeout_s)

        switch.attach(addr, self.receive)
        sim.register("victim.timer", self._on_timer)
        sim.register("victim.cpu", self._on_cpu)

    @property
    def occupancy(self) -> int:
        return len(self.table)

    # packet plumbing

    def _send(self, dst: HostAddr, dst_port: int, kind: Kind,
              payload: Payload | None = None, size: int = 40) -> None:
        self.switch.forward(Packet(self.sim.now, self.addr, dst, self.port, dst_port,
                                   kind, payload, size))

    def _rst(self, key) -> None:
        self._send(key[0], key[1], Kind.RST)

    def receive(self, pkt: Packet):
        self.received += 1
        kind = pkt.kind
        if kind is Kind.SYN:
            return self.on_syn(pkt)
        if kind is Kind.ACK:
            return self.on_ack(pkt)
        if kind is Kind.DATA:
            return self.on_data(pkt)
        if kind is Kind.RST or kind is Kind.FIN:
            return self.on_close(pkt)
        self.counters["unexpected_" + kind.value] += 1
        return IGNORED

    def _arm(self, rec: ConnectionRecord, which: str, delay: int) -> None:
        self.sim.cancel(rec.timer)
        rec.timer = self.sim.schedule_in(delay, "victim.timer", (rec, which))

    def _free(self, rec: ConnectionRecord, reason: str) -> None:
        self.sim.cancel(rec.timer)
        rec.timer = None
        rec.phase = Phase.CLOSED
        del self.table[rec.key]
        self.closed[reason] += 1

    # handshake

    def on_syn(self, pkt: Packet) -> str:
        key = (pkt.src, pkt.src_port)
        now = self.sim.now
        self.counters["syn"] += 1
        if key in self.table:
            self.counters["duplicate_syn"] += 1
            return DUPLICATE
        if len(self.table) >= self.cfg.table_capacity:
            self.counters["rejected_full"] += 1
            self._rejected_since += 1
            self._rst(key)
            return REJECTED_FULL
        rec = ConnectionRecord(key, Phase.SYN_RECEIVED, now, now)
        self.table[key] = rec
        self.counters["accepted"] += 1
        n = len(self.table)
        if n > self.peak_occupancy:
            self.peak_occupancy = n
        if n >= self.cfg.table_capacity and self.first_full_at is None:
            self.first_full_at = now
        self._arm(rec, "syn", self._syn_timeout)
        self._send(pkt.src, pkt.src_port, Kind.SYN_ACK)
        return SYN_ACK_SENT

    def on_ack(self, pkt: Packet) -> str:
        rec = self.table.get((pkt.src, pkt.src_port))
        if rec is None or rec.phase is not Phase.SYN_RECEIVED:
            self.counters["stray_ack"] += 1
            return IGNORED
        rec.phase = Phase.ESTABLISHED
        rec.last_packet_at = self.sim.now
        self._arm(rec, "header", self._header_timeout)
        return ESTABLISHED

    def on_close(self, pkt: Packet) -> str:
        rec = self.table.get((pkt.src, pkt.src_port))
        if rec is None:
            return IGNORED
        # queued work stays on the CPU; its response is discarded
        self._free(rec, "client_close")
        return FREED

    # request assembly

    def on_data(self, pkt: Packet) -> str:
        key = (pkt.src, pkt.src_port)
        rec = self.table.get(key)
        now = self.sim.now
        if rec is None:
            self.counters["stray_data"] += 1
            self._rst(key)
            return IGNORED
        if rec.phase is Phase.SYN_RECEIVED:
            self.counters["protocol_error"] += 1
            self._free(rec, "protocol_error")
            self._rst(key)
            return PROTOCOL_ERROR
        if rec.last_data_at is not None:
            rec.inter_packet_gaps.append(now - rec.last_data_at)
        rec.last_data_at = now
        rec.last_packet_at = now
        p = pkt.payload
        kind = p.kind

        if kind == TLS_HANDSHAKE or kind == TLS_RENEGOTIATE:
            if rec.phase is not Phase.ESTABLISHED:
                return self._bad_state(rec)
            self._arm(rec, "header", self._header_timeout)
            self.counters[kind] += 1
            if self._enqueue(rec, self.cfg.tls_handshake_cost, "tls"):
                return TLS_RENEGOTIATED
            return QUEUE_REJECTED

        if kind == HTTP_GET:
            if rec.phase not in (Phase.ESTABLISHED, Phase.RECEIVING_HEADER):
                return self._bad_state(rec)
            rec.target = p.target
            return self._request_complete(rec)

        if kind == HEADER_FRAGMENT:
            if rec.phase not in (Phase.ESTABLISHED, Phase.RECEIVING_HEADER):
                return self._bad_state(rec)
            rec.target = p.target
            if not p.final:
                rec.phase = Phase.RECEIVING_HEADER
                self._arm(rec, "header", self._header_timeout)
                return NEED_MORE
            if p.post:
                rec.phase = Phase.RECEIVING_BODY
                self._arm(rec, "body", self._body_timeout)
                return NEED_MORE
            return self._request_complete(rec)

        if kind == POST_FRAGMENT:
            if rec.phase is not Phase.RECEIVING_BODY:
                return self._bad_state(rec)
            if not p.final:
                self._arm(rec, "body", self._body_timeout)
                return NEED_MORE
            return self._request_complete(rec)

        return self._bad_state(rec)

    def _bad_state(self, rec: ConnectionRecord) -> str:
        self.counters["protocol_error"] += 1
        self._free(rec, "protocol_error")
        self._rst(rec.key)
        return PROTOCOL_ERROR

    def _request_complete(self, rec: ConnectionRecord) -> str:
        self.sim.cancel(rec.timer)
        rec.timer = None
        rec.phase = Phase.QUEUED
        self.counters["requests"] += 1
        if self._enqueue(rec, self.cfg.request_cost(rec.target), "http"):
            return REQUEST_QUEUED
        return QUEUE_REJECTED

    # timers

    def _on_timer(self, payload) -> None:
        rec, which = payload
        if rec.phase is Phase.CLOSED:
            return
        rec.timer = None
        self.on_timeout(rec.key, which)

    def on_timeout(self, key, which: str) -> str:
        rec = self.table.get(key)
        if rec is None:
            return IGNORED
        self._free(rec, f"timeout_{which}")
        self.counters[f"timeout_{which}"] += 1
        self._timeouts_since[which] += 1
        if which != "syn":
            self._rst(key)
        return FREED

    # CPU

    def _enqueue(self, rec: ConnectionRecord, cost: float, kind: str) -> bool:
        if len(self.queue) >= self.cfg.cpu_queue_limit:
            self.counters["queue_rejected"] += 1
            self._free(rec, "queue_rejected")
            self._rst(rec.key)
            return False
        self.queue.append(Job(rec, cost, kind, self.sim.now))
        self.units_enqueued += cost
        if self.current is None:
            self.cpu_dispatch(self.sim.now)
        return True

    def _service_us(self, cost: float) -> int:
        return math.ceil(cost * US_PER_S / self.cfg.cpu_capacity_ups)

    def _on_cpu(self, _payload) -> None:
        self._completion = None
        self.cpu_dispatch(self.sim.now)

    def cpu_dispatch(self, now: int) -> list[tuple[tuple[HostAddr, int], Optional[Packet]]]:
        """Finish the job in service if it is due, then start the next one.

        Returns ``(key, response)`` for each finished job; ``response`` is
        None when the client went away before the work completed.
        """
        completions = []
        job = self.current
        if job is not None and self._completion is None:
            # completion event has fired
            self.current = None
            self.units_completed += job.cost
            self.service_spans.append((job.cost, now - job.enqueued_at))
            rec = job.record
            response = None
            if rec.phase is not Phase.CLOSED and self.table.get(rec.key) is rec:
                if job.kind == "tls":
                    payload = Payload(TLS_HANDSHAKE)
                    response = Packet(now, self.addr, rec.key[0], self.port, rec.key[1],
                                      Kind.DATA, payload, 1500)
                    self.switch.forward(response)
                    self._arm(rec, "header", self._header_timeout)
                else:
                    payload = Payload(HTTP_RESPONSE, target=rec.target)
                    response = Packet(now, self.addr, rec.key[0], self.port, rec.key[1],
                                      Kind.DATA, payload, 1500)
                    self._free(rec, "completed")
                    self.switch.forward(response)
            else:
                self.counters["orphaned_jobs"] += 1
            completions.append((rec.key, response))
        if self.current is None:
            if self.queue:
                job = self.queue.popleft()
                job.started_at = now
                if job.kind == "http" and job.record.phase is Phase.QUEUED:
                    job.record.phase = Phase.PROCESSING
                self.current = job
                self._completion = self.sim.schedule(now + self._service_us(job.cost), "victim.cpu")
                if self._busy_start is None:
                    self._busy_start = now
            elif self._busy_start is not None:
                self._busy_accum += now - self._busy_start
                self._busy_start = None
        return completions

    # metrics

    def metrics_sample(self, now: int) -> VictimSample:
        busy = self._busy_accum
        if self._busy_start is not None:
            busy += now - self._busy_start
            self._busy_start = now
        elapsed = now - self._last_sample
        util = busy / elapsed if elapsed > 0 else 0.0
        sample = VictimSample(len(self.table), util, self._rejected_since,
                              dict(sorted(self._timeouts_since.items())))
        self._busy_accum = 0
        self._last_sample = now
        self._rejected_since = 0
        self._timeouts_since = Counter()
        return sample
