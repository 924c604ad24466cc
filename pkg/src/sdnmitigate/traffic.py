"""Scenario actors: benign clients and the five attack generators.

Every actor owns one random stream per source address, so adding or
removing an actor never changes another actor's draws.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .engine import EventHandle, Simulator, seconds
from .topology import (
    HEADER_FRAGMENT, HTTP_GET, HTTP_RESPONSE, POST_FRAGMENT, TLS_HANDSHAKE, TLS_RENEGOTIATE,
    AddressPlan, HostAddr, Kind, Packet, Payload, Role, Switch,
)

ATTACK_KINDS = ("syn_flood", "http_flood", "tls_flood", "slow_header", "slow_body")
FLOOD_KINDS = frozenset({"syn_flood", "http_flood", "tls_flood"})
SLOW_KINDS = frozenset({"slow_header", "slow_body"})

REQUEST_BYTES = 300
FRAGMENT_BYTES = 60
SERVER_PORT = 80


@dataclass(frozen=True)
class AttackConfig:
    kind: str
    start_s: float
    duration_s: float
    rate_pps: float = 100.0
    source_count: int = 300
    connections_per_source: int = 8
    slow_interval_s: float = 30.0
    jitter_fraction: float = 0.02

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.start_s < 0 or self.duration_s < 0:
            raise ValueError("attack start_s and duration_s must be non-negative")
        if self.kind in FLOOD_KINDS and self.rate_pps <= 0:
            raise ValueError("rate_pps must be positive for flooding attacks")
        if self.kind in SLOW_KINDS and self.slow_interval_s <= 0:
            raise ValueError("slow_interval_s must be positive for slow attacks")
        if self.source_count <= 0 or self.connections_per_source <= 0:
            raise ValueError("source_count and connections_per_source must be positive")
        if not 0 <= self.jitter_fraction < 1:
            raise ValueError("jitter_fraction must be in [0, 1)")

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s


@dataclass(frozen=True)
class BenignConfig:
    client_count: int = 20
    request_interval_s: float = 2.0
    target: str = "light"
    bad_network_clients: int = 1
    bad_gap_s: float = 10.0
    patience_s: float = 10.0

    def __post_init__(self):
        if self.client_count <= 0:
            raise ValueError("client_count must be positive")
        if not 0 <= self.bad_network_clients <= self.client_count:
            raise ValueError("bad_network_clients must be between 0 and client_count")
        if self.request_interval_s <= 0 or self.bad_gap_s <= 0 or self.patience_s <= 0:
            raise ValueError("benign intervals must be positive")
        if self.target not in ("light", "heavy"):
            raise ValueError(f"unknown benign target {self.target!r}")


class Actor:
    """Base for anything that sends packets to the server and reacts to replies."""

    def __init__(self, sim: Simulator, switch: Switch, server: HostAddr, name: str):
        self.sim = sim
        self.switch = switch
        self.server = server
        self.name = name
        self.target = f"actor.{name}"
        sim.register(self.target, self._dispatch)
        self.sent = 0
        self.sent_log: list[tuple[int, int, str]] | None = None  # (time, src, kind)

    @staticmethod
    def _dispatch(payload) -> None:
        fn, args = payload
        fn(*args)

    def at(self, when: int, fn: Callable, *args) -> EventHandle:
        return self.sim.schedule(when, self.target, (fn, args))

    def after(self, delay: int, fn: Callable, *args) -> EventHandle:
        return self.sim.schedule(self.sim.now + delay, self.target, (fn, args))

    def send(self, src: HostAddr, sport: int, kind: Kind, payload: Payload | None = None,
             size: int = 40) -> None:
        self.sent += 1
        if self.sent_log is not None:
            self.sent_log.append((self.sim.now, src.value, kind.value if payload is None else payload.kind))
        self.switch.forward(Packet(self.sim.now, src, self.server, sport, SERVER_PORT,
                                   kind, payload, size))


# ---------------------------------------------------------------------------
# benign clients


SUCCESS = "success"
REFUSED = "refused"
TIMED_OUT = "timed_out"


@dataclass
class RequestOutcome:
    resolved_at: int
    client: HostAddr
    outcome: str
    response_time: Optional[int] = None  # microseconds, successes only


class BenignClient:
    """One well-behaved user: connect, request, await the answer, think, repeat.

    A bad-network client sends its header in three fragments ``bad_gap_s``
    apart but always finishes it.
    """

    def __init__(self, pool: "BenignPool", addr: HostAddr, bad_network: bool):
        self.pool = pool
        self.addr = addr
        self.bad_network = bad_network
        self.rng = pool.sim.rng(f"benign:{addr.value}")
        self.next_port = 1024
        self.port: Optional[int] = None
        self.state = "idle"
        self.request_sent_at: Optional[int] = None
        self.patience: Optional[EventHandle] = None
        self.fragment_timers: list[EventHandle] = []

    def think(self) -> None:
        p = self.pool
        delay = seconds(self.rng.exponential(p.cfg.request_interval_s))
        p.after(max(delay, 1), self.connect)

    def connect(self) -> None:
        p = self.pool
        self.port = self.next_port
        self.next_port = 1024 + (self.next_port - 1023) % 64000
        self.state = "syn"
        self.request_sent_at = None
        p.send(self.addr, self.port, Kind.SYN)
        self.patience = p.after(p.patience, self.give_up, self.port)

    def receive(self, pkt: Packet) -> None:
        if pkt.dst_port != self.port or self.state == "idle":
            return
        p = self.pool
        if pkt.kind is Kind.SYN_ACK and self.state == "syn":
            p.send(self.addr, self.port, Kind.ACK)
            self.state = "request"
            # patience runs from the end of the request, not while still sending it
            p.sim.cancel(self.patience)
            if self.bad_network:
                gap = p.bad_gap
                self._fragment(False)
                self.fragment_timers = [
                    p.after(gap, self._fragment, False),
                    p.after(2 * gap, self._fragment, True),
                ]
            else:
                p.send(self.addr, self.port, Kind.DATA, Payload(HTTP_GET, p.cfg.target), REQUEST_BYTES)
                self._request_sent()
        elif pkt.kind is Kind.DATA and pkt.payload.kind == HTTP_RESPONSE and self.request_sent_at is not None:
            self._resolve(SUCCESS, self.pool.sim.now - self.request_sent_at)
        elif pkt.kind is Kind.RST:
            self._resolve(REFUSED)

    def _fragment(self, final: bool) -> None:
        if self.state != "request":
            return
        p = self.pool
        p.send(self.addr, self.port, Kind.DATA,
               Payload(HEADER_FRAGMENT, p.cfg.target, final=final), FRAGMENT_BYTES)
        if final:
            self._request_sent()

    def _request_sent(self) -> None:
        p = self.pool
        self.request_sent_at = p.sim.now
        p.sim.cancel(self.patience)
        self.patience = p.after(p.patience, self.give_up, self.port)

    def give_up(self, port: int) -> None:
        if port != self.port or self.state == "idle":
            return
        if self.state == "request":
            self.pool.send(self.addr, self.port, Kind.RST)
        self._resolve(TIMED_OUT)

    def _resolve(self, outcome: str, response_time: int | None = None) -> None:
        p = self.pool
        p.sim.cancel(self.patience)
        for h in self.fragment_timers:
            p.sim.cancel(h)
        self.fragment_timers = []
        self.state = "idle"
        p.outcomes.append(RequestOutcome(p.sim.now, self.addr, outcome, response_time))
        self.think()


class BenignPool(Actor):
    def __init__(self, sim: Simulator, switch: Switch, plan: AddressPlan, server: HostAddr,
                 cfg: BenignConfig):
        super().__init__(sim, switch, server, "benign")
        self.cfg = cfg
        self.patience = seconds(cfg.patience_s)
        self.bad_gap = seconds(cfg.bad_gap_s)
        self.outcomes: list[RequestOutcome] = []
        addrs = plan.allocate(Role.BENIGN, cfg.client_count)
        # the last clients in the pool are the bad-network ones
        first_bad = cfg.client_count - cfg.bad_network_clients
        self.clients = [BenignClient(self, a, i >= first_bad) for i, a in enumerate(addrs)]
        for c in self.clients:
            switch.attach(c.addr, c.receive)
            c.think()

    @property
    def addresses(self) -> list[HostAddr]:
        return [c.addr for c in self.clients]

    @property
    def bad_network_addresses(self) -> list[HostAddr]:
        return [c.addr for c in self.clients if c.bad_network]


def spawn_benign(sim: Simulator, switch: Switch, plan: AddressPlan, server: HostAddr,
                 cfg: BenignConfig) -> BenignPool:
    return BenignPool(sim, switch, plan, server, cfg)


# ---------------------------------------------------------------------------
# attacks


class Attack(Actor):
    """Common scaffolding: source addresses, per-source RNG, active window."""

    def __init__(self, sim: Simulator, switch: Switch, plan: AddressPlan, server: HostAddr,
                 cfg: AttackConfig, name: str, spoofed: bool = False):
        super().__init__(sim, switch, server, name)
        self.cfg = cfg
        self.sources = plan.allocate(Role.ATTACKER, cfg.source_count)
        self.rngs = [sim.rng(f"{cfg.kind}:{a.value}") for a in self.sources]
        self.start = seconds(cfg.start_s)
        self.end = seconds(cfg.end_s)
        self.spoofed = spoofed
        if not spoofed:
            for i, a in enumerate(self.sources):
                switch.attach(a, self._make_receiver(i))

    @property
    def addresses(self) -> list[HostAddr]:
        return list(self.sources)

    def active(self) -> bool:
        return self.start <= self.sim.now < self.end

    def _make_receiver(self, index: int) -> Callable[[Packet], None]:
        return lambda pkt: self.on_reply(index, pkt)

    def on_reply(self, index: int, pkt: Packet) -> None:
        pass


class PacedAttack(Attack):
    """Flooding generator: slot ``i`` fires at ``start + i/rate`` plus jitter
    inside the slot, and belongs to source ``i mod source_count``."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.slot_us = 1_000_000 / self.cfg.rate_pps
        self.total_slots = int(np.ceil(round(self.cfg.rate_pps * self.cfg.duration_s, 9)))
        self.slot = 0
        if self.total_slots > 0:
            self.at(self._slot_time(0), self._fire)

    def _slot_time(self, i: int) -> int:
        src = i % len(self.sources)
        offset = 0.0
        if self.cfg.jitter_fraction > 0:
            offset = self.rngs[src].uniform(0, self.cfg.jitter_fraction) * self.slot_us
        return self.start + int(i * self.slot_us + offset)

    def _fire(self) -> None:
        i = self.slot
        self.emit(i % len(self.sources))
        self.slot += 1
        if self.slot < self.total_slots:
            self.at(max(self._slot_time(self.slot), self.sim.now), self._fire)

    def emit(self, index: int) -> None:
        raise NotImplementedError


class SynFlood(PacedAttack):
    """Spoofed SYNs, round-robin over the source pool; never completes a handshake."""

    def __init__(self, sim, switch, plan, server, cfg, name="syn_flood"):
        super().__init__(sim, switch, plan, server, cfg, name, spoofed=True)

    def emit(self, index: int) -> None:
        port = int(self.rngs[index].integers(1024, 65536))
        self.send(self.sources[index], port, Kind.SYN)


class HttpFlood(PacedAttack):
    """Full handshake, one heavy GET, then an immediate reset: the attacker
    never waits for the answer."""

    def __init__(self, sim, switch, plan, server, cfg, name="http_flood"):
        super().__init__(sim, switch, plan, server, cfg, name)
        self.ports = [1024] * len(self.sources)
        self.pending: list[set[int]] = [set() for _ in self.sources]
        self.requests_sent = 0

    def emit(self, index: int) -> None:
        port = self.ports[index]
        self.ports[index] = 1024 + (port - 1023) % 64000
        self.pending[index].add(port)
        self.send(self.sources[index], port, Kind.SYN)

    def on_reply(self, index: int, pkt: Packet) -> None:
        pending = self.pending[index]
        if pkt.dst_port not in pending:
            return
        if pkt.kind is Kind.SYN_ACK:
            src = self.sources[index]
            self.send(src, pkt.dst_port, Kind.ACK)
            self.send(src, pkt.dst_port, Kind.DATA, Payload(HTTP_GET, "heavy"), REQUEST_BYTES)
            self.send(src, pkt.dst_port, Kind.RST)
            self.requests_sent += 1
        pending.discard(pkt.dst_port)


class TlsFlood(PacedAttack):
    """One long-lived TLS connection per source, renegotiated at the source's
    share of ``rate_pps``."""

    def __init__(self, sim, switch, plan, server, cfg, name="tls_flood"):
        self.ready: list[bool] = [False] * cfg.source_count
        self.backlog: list[int] = [0] * cfg.source_count
        self.ports: list[int] = [1024] * cfg.source_count
        self.renegotiations = 0
        super().__init__(sim, switch, plan, server, cfg, name)
        for i in range(len(self.sources)):
            self.at(self.start + i, self._open, i)

    def _open(self, index: int) -> None:
        self.ready[index] = False
        self.ports[index] = 1024 + (self.ports[index] - 1023) % 64000
        self.send(self.sources[index], self.ports[index], Kind.SYN)

    def emit(self, index: int) -> None:
        if self.ready[index]:
            self._renegotiate(index)
        else:
            self.backlog[index] += 1

    def _renegotiate(self, index: int) -> None:
        self.renegotiations += 1
        self.send(self.sources[index], self.ports[index], Kind.DATA,
                  Payload(TLS_RENEGOTIATE), REQUEST_BYTES)

    def on_reply(self, index: int, pkt: Packet) -> None:
        if pkt.dst_port != self.ports[index]:
            return
        src = self.sources[index]
        if pkt.kind is Kind.SYN_ACK and not self.ready[index]:
            self.send(src, pkt.dst_port, Kind.ACK)
            self.send(src, pkt.dst_port, Kind.DATA, Payload(TLS_HANDSHAKE), REQUEST_BYTES)
            self.ready[index] = True
            while self.backlog[index]:
                self.backlog[index] -= 1
                self._renegotiate(index)
        elif pkt.kind is Kind.RST:
            self.ready[index] = False
            if self.active():
                self.after(1_000_000, self._open, index)


class SlowConnection:
    __slots__ = ("port", "state", "timer", "fragments")

    def __init__(self, port: int):
        self.port = port
        self.state = "syn"
        self.timer: Optional[EventHandle] = None
        self.fragments = 0


class SlowAttack(Attack):
    """Slow header / slow body: hold as many connections as possible and
    drip one never-final fragment every ``slow_interval_s``.

    Connections open during a ramp of one connection per source per second;
    a connection the server resets is reopened a second later.
    """

    REOPEN_US = 1_000_000

    def __init__(self, sim, switch, plan, server, cfg, name=None):
        super().__init__(sim, switch, plan, server, cfg, name or cfg.kind)
        self.body = cfg.kind == "slow_body"
        self.interval = seconds(cfg.slow_interval_s)
        self.conns: list[dict[int, SlowConnection]] = [{} for _ in self.sources]
        self.next_port = [1024] * len(self.sources)
        n = len(self.sources)
        for k in range(cfg.connections_per_source):
            for j in range(n):
                t = self.start + k * 1_000_000 + (j * 1_000_000) // n
                if t < self.end:
                    self.at(t, self._open, j)
        self.at(self.end, self._stop)

    def _open(self, index: int) -> None:
        if not self.active():
            return
        port = self.next_port[index]
        self.next_port[index] = 1024 + (port - 1023) % 64000
        self.conns[index][port] = SlowConnection(port)
        self.send(self.sources[index], port, Kind.SYN)

    def _stop(self) -> None:
        for conns in self.conns:
            for c in conns.values():
                self.sim.cancel(c.timer)

    def _gap(self, index: int) -> int:
        j = self.cfg.jitter_fraction
        factor = 1.0 + (self.rngs[index].uniform(-j, j) if j > 0 else 0.0)
        return max(1, int(round(self.interval * factor)))

    def on_reply(self, index: int, pkt: Packet) -> None:
        conn = self.conns[index].get(pkt.dst_port)
        if conn is None:
            return
        src = self.sources[index]
        if pkt.kind is Kind.SYN_ACK and conn.state == "syn":
            conn.state = "open"
            self.send(src, conn.port, Kind.ACK)
            if self.body:
                # complete POST header announcing a body, then drip the body
                self.send(src, conn.port, Kind.DATA,
                          Payload(HEADER_FRAGMENT, "light", final=True, post=True), REQUEST_BYTES)
            else:
                self._drip(index, conn)
                return
            conn.timer = self.after(self._gap(index), self._drip, index, conn)
        elif pkt.kind is Kind.RST:
            self.sim.cancel(conn.timer)
            del self.conns[index][conn.port]
            if self.active():
                self.after(self.REOPEN_US, self._open, index)

    def _drip(self, index: int, conn: SlowConnection) -> None:
        if not self.active() or self.conns[index].get(conn.port) is not conn:
            return
        kind = POST_FRAGMENT if self.body else HEADER_FRAGMENT
        self.send(self.sources[index], conn.port, Kind.DATA,
                  Payload(kind, "light", final=False), FRAGMENT_BYTES)
        conn.fragments += 1
        conn.timer = self.after(self._gap(index), self._drip, index, conn)

    @property
    def open_connections(self) -> int:
        return sum(1 for conns in self.conns for c in conns.values() if c.state == "open")


ATTACK_CLASSES = {
    "syn_flood": SynFlood,
    "http_flood": HttpFlood,
    "tls_flood": TlsFlood,
    "slow_header": SlowAttack,
    "slow_body": SlowAttack,
}


def spawn_attack(sim: Simulator, switch: Switch, plan: AddressPlan, server: HostAddr,
                 cfg: AttackConfig, name: str | None = None) -> Attack:
    cls = ATTACK_CLASSES[cfg.kind]
    return cls(sim, switch, plan, server, cfg, name=name or cfg.kind)


def spawn_syn_flood(sim, switch, plan, server, cfg: AttackConfig) -> SynFlood:
    if cfg.kind != "syn_flood":
        raise ValueError("spawn_syn_flood needs kind = syn_flood")
    return SynFlood(sim, switch, plan, server, cfg)


def spawn_http_flood(sim, switch, plan, server, cfg: AttackConfig) -> HttpFlood:
    if cfg.kind != "http_flood":
        raise ValueError("spawn_http_flood needs kind = http_flood")
    return HttpFlood(sim, switch, plan, server, cfg)


def spawn_tls_flood(sim, switch, plan, server, cfg: AttackConfig) -> TlsFlood:
    if cfg.kind != "tls_flood":
        raise ValueError("spawn_tls_flood needs kind = tls_flood")
    return TlsFlood(sim, switch, plan, server, cfg)


def spawn_slow_header(sim, switch, plan, server, cfg: AttackConfig) -> SlowAttack:
    if cfg.kind != "slow_header":
        raise ValueError("spawn_slow_header needs kind = slow_header")
    return SlowAttack(sim, switch, plan, server, cfg)


def spawn_slow_body(sim, switch, plan, server, cfg: AttackConfig) -> SlowAttack:
    if cfg.kind != "slow_body":
        raise ValueError("spawn_slow_body needs kind = slow_body")
    return SlowAttack(sim, switch, plan, server, cfg)
