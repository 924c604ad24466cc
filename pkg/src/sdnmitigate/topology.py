"""Single-switch topology: hosts, links, drop-rule flow table and mirror tap."""

from __future__ import annotations

import ipaddress
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, NamedTuple, Optional

from .engine import US_PER_S, Simulator


class Role(str, Enum):
    VICTIM = "victim"
    SENTINEL = "sentinel"
    BENIGN = "benign-pool"
    ATTACKER = "attacker-pool"
    PROBER = "prober"


class HostAddr(NamedTuple):
    value: int
    role: Role

    def __str__(self) -> str:
        return str(ipaddress.IPv4Address(self.value))


MIRRORED_ROLES = frozenset({Role.BENIGN, Role.ATTACKER})


class AddressPlan:
    """Hands out addresses: fixed singletons plus two disjoint /16 pools."""

    SENTINEL = int(ipaddress.IPv4Address("10.0.0.1"))
    VICTIM = int(ipaddress.IPv4Address("10.0.0.2"))
    PROBER = int(ipaddress.IPv4Address("10.0.0.4"))
    BENIGN_BASE = int(ipaddress.IPv4Address("10.1.0.1"))
    ATTACKER_BASE = int(ipaddress.IPv4Address("10.2.0.1"))
    POOL_SIZE = 65_000

    def __init__(self):
        self.sentinel = HostAddr(self.SENTINEL, Role.SENTINEL)
        self.victim = HostAddr(self.VICTIM, Role.VICTIM)
        self.prober = HostAddr(self.PROBER, Role.PROBER)
        self._next = {Role.BENIGN: 0, Role.ATTACKER: 0}

    def allocate(self, role: Role, count: int) -> list[HostAddr]:
        base = {Role.BENIGN: self.BENIGN_BASE, Role.ATTACKER: self.ATTACKER_BASE}[role]
        start = self._next[role]
        if start + count > self.POOL_SIZE:
            raise ValueError(f"{role.value} pool exhausted")
        self._next[role] = start + count
        return [HostAddr(base + i, role) for i in range(start, start + count)]

    def role_of(self, value: int) -> Optional[Role]:
        if value == self.VICTIM:
            return Role.VICTIM
        if value == self.SENTINEL:
            return Role.SENTINEL
        if value == self.PROBER:
            return Role.PROBER
        if self.BENIGN_BASE <= value < self.BENIGN_BASE + self.POOL_SIZE:
            return Role.BENIGN
        if self.ATTACKER_BASE <= value < self.ATTACKER_BASE + self.POOL_SIZE:
            return Role.ATTACKER
        return None


class Kind(str, Enum):
    SYN = "SYN"
    SYN_ACK = "SYN_ACK"
    ACK = "ACK"
    FIN = "FIN"
    RST = "RST"
    DATA = "DATA"


@dataclass(frozen=True, slots=True)
class Payload:
    """Application payload descriptor carried by DATA packets.

    ``kind`` is one of http-get, http-header-fragment, http-post-fragment,
    tls-handshake, tls-renegotiate, http-response. ``post`` on a final header
    fragment announces a request body.
    """

    kind: str
    target: str = "light"
    final: bool = True
    post: bool = False


HTTP_GET = "http-get"
HEADER_FRAGMENT = "http-header-fragment"
POST_FRAGMENT = "http-post-fragment"
TLS_HANDSHAKE = "tls-handshake"
TLS_RENEGOTIATE = "tls-renegotiate"
HTTP_RESPONSE = "http-response"
PAYLOAD_KINDS = frozenset(
    {HTTP_GET, HEADER_FRAGMENT, POST_FRAGMENT, TLS_HANDSHAKE, TLS_RENEGOTIATE, HTTP_RESPONSE}
)


@dataclass(frozen=True, slots=True)
class Packet:
    at: int
    src: HostAddr
    dst: HostAddr
    src_port: int
    dst_port: int
    kind: Kind
    payload: Optional[Payload] = None
    size_bytes: int = 40

    def __post_init__(self):
        if self.size_bytes < 40:
            raise ValueError("size_bytes must be >= 40")
        if self.kind is not Kind.DATA and self.payload is not None:
            raise ValueError(f"{self.kind.value} packets carry no payload")


@dataclass(frozen=True)
class LinkParams:
    bandwidth_bps: int = 13_000_000_000
    propagation_us: int = 50
    buffer_us: Optional[int] = None  # max egress queueing delay; None = unbounded

    def __post_init__(self):
        if self.bandwidth_bps <= 0:
            raise ValueError("bandwidth_bps must be positive")
        if self.propagation_us < 0:
            raise ValueError("propagation_us must be non-negative")

    def serialization_us(self, size_bytes: int) -> int:
        return math.ceil(size_bytes * 8 * US_PER_S / self.bandwidth_bps)


@dataclass
class FlowRule:
    match_src: HostAddr
    installed_at: int
    hard_timeout: Optional[int] = None  # microseconds
    action: str = "drop"

    def live(self, now: int) -> bool:
        return self.hard_timeout is None or now < self.installed_at + self.hard_timeout


class RuleTableFull(RuntimeError):
    pass


DROPPED_BY_RULE = "dropped_by_rule"
DROPPED_OVERFLOW = "dropped_overflow"
ROUTING_ERROR = "routing_error"


@dataclass
class SwitchCounters:
    forwarded: int = 0
    delivered: int = 0
    dropped_by_rule: int = 0
    dropped_overflow: int = 0
    mirrored: int = 0


class Switch:
    """The switch plus its links.

    Every host hangs off one switch port. Each egress port is a FIFO link:
    a packet waits for the previous one to finish serializing, then takes
    the propagation delay. Drop rules match on source address and are
    applied before the mirror point.
    """

    def __init__(self, sim: Simulator, plan: AddressPlan, link: LinkParams | None = None,
                 max_rules: int | None = None, record_victim_log: bool = True):
        self.sim = sim
        self.plan = plan
        self.link = link or LinkParams()
        self.max_rules = max_rules
        self.rules: dict[HostAddr, FlowRule] = {}
        self.counters = SwitchCounters()
        self.routing_errors: list[tuple[int, str]] = []
        self._hosts: dict[HostAddr, Callable[[Packet], None]] = {}
        self._pool_default: dict[Role, Callable[[Packet], None]] = {}
        self._tap: Callable[[Packet], None] | None = None
        self._busy_until: dict[object, int] = {}
        # victim-bound deliveries: (delivered_at, src value)
        self.victim_log: list[tuple[int, int]] | None = [] if record_victim_log else None
        sim.register("switch", self._deliver)

    # wiring

    def attach(self, addr: HostAddr, handler: Callable[[Packet], None]) -> None:
        self._hosts[addr] = handler

    def attach_pool_default(self, role: Role, handler: Callable[[Packet], None]) -> None:
        self._pool_default[role] = handler

    def set_tap(self, handler: Callable[[Packet], None] | None) -> None:
        self._tap = handler

    def _port(self, addr: HostAddr) -> object:
        # pool hosts share one physical port per pool (Host 3 / benign host)
        if addr.role in MIRRORED_ROLES:
            return addr.role
        return addr

    def _resolve(self, addr: HostAddr) -> Callable[[Packet], None] | None:
        handler = self._hosts.get(addr)
        if handler is None:
            handler = self._pool_default.get(addr.role)
        return handler

    # flow table

    def _matching_rule(self, src: HostAddr, now: int) -> FlowRule | None:
        rule = self.rules.get(src)
        if rule is None:
            return None
        if not rule.live(now):
            del self.rules[src]
            return None
        return rule

    def install_rule(self, rule: FlowRule) -> bool:
        """Install a drop rule; False when one already matches the source."""
        existing = self._matching_rule(rule.match_src, self.sim.now)
        if existing is not None:
            existing.installed_at = rule.installed_at
            existing.hard_timeout = rule.hard_timeout
            return False
        if self.max_rules is not None and len(self.rules) >= self.max_rules:
            self.active_rules(self.sim.now)
            if len(self.rules) >= self.max_rules:
                raise RuleTableFull(f"flow table full ({self.max_rules} rules)")
        self.rules[rule.match_src] = rule
        return True

    def active_rules(self, now: int) -> list[FlowRule]:
        for src in [s for s, r in self.rules.items() if not r.live(now)]:
            del self.rules[src]
        return sorted(self.rules.values(), key=lambda r: r.match_src.value)

    # data path

    def forward(self, pkt: Packet):
        """Send ``pkt`` into the switch.

        Returns the scheduled delivery time, or one of ``DROPPED_BY_RULE``,
        ``DROPPED_OVERFLOW``, ``ROUTING_ERROR``.
        """
        now = self.sim.now
        if pkt.at != now:
            raise ValueError(f"packet stamped {pkt.at} forwarded at {now}")
        c = self.counters
        c.forwarded += 1
        if self.rules and self._matching_rule(pkt.src, now) is not None:
            c.dropped_by_rule += 1
            return DROPPED_BY_RULE
        if self._resolve(pkt.dst) is None:
            self.routing_errors.append((now, f"no route to {pkt.dst}"))
            return ROUTING_ERROR
        port = self._port(pkt.dst)
        start = max(now, self._busy_until.get(port, 0))
        if self.link.buffer_us is not None and start - now > self.link.buffer_us:
            c.dropped_overflow += 1
            return DROPPED_OVERFLOW
        done = start + self.link.serialization_us(pkt.size_bytes)
        self._busy_until[port] = done
        delivered_at = done + self.link.propagation_us
        self.sim.schedule(delivered_at, "switch", pkt)
        return delivered_at

    def _deliver(self, pkt: Packet) -> None:
        now = self.sim.now
        c = self.counters
        # a rule installed while the packet sat in the egress queue still applies
        if self.rules and self._matching_rule(pkt.src, now) is not None:
            c.dropped_by_rule += 1
            return
        c.delivered += 1
        if self.victim_log is not None and pkt.dst.role is Role.VICTIM:
            self.victim_log.append((now, pkt.src.value))
        handler = self._resolve(pkt.dst)
        if self._tap is not None and (pkt.src.role in MIRRORED_ROLES or pkt.dst.role in MIRRORED_ROLES):
            c.mirrored += 1
            self._tap(pkt)
        handler(pkt)


def sink(pkt: Packet) -> None:
    """Host that swallows everything (spoofed addresses nobody owns)."""


__all__ = [
    "AddressPlan", "DROPPED_BY_RULE", "DROPPED_OVERFLOW", "FlowRule", "HostAddr", "Kind",
    "LinkParams", "Packet", "Payload", "ROUTING_ERROR", "Role", "RuleTableFull", "Switch",
    "sink",
]
