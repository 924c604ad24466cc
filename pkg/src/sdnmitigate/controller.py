"""SDN controller: turns detection events into drop rules."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

from .engine import Simulator
from .sentinel import DetectionEvent
from .topology import FlowRule, HostAddr, RuleTableFull, Switch

logger = logging.getLogger(__name__)

CHANNEL_LATENCY_US = 1_000


@dataclass(frozen=True)
class BlockEntry:
    addr: HostAddr
    blocked_at: int
    cause_class: str
    evidence: Optional[dict] = None


class Controller:
    """Installs one source-match drop rule per identified attacker.

    Detection events arrive over an in-process channel with a fixed
    processing latency. The controller never second-guesses the sentinel.
    """

    def __init__(self, sim: Simulator, switch: Switch, hard_timeout: int | None = None,
                 log: Callable[..., None] | None = None, latency_us: int = CHANNEL_LATENCY_US):
        self.sim = sim
        self.switch = switch
        self.hard_timeout = hard_timeout
        self.latency_us = latency_us
        self.log = log or (lambda *a: None)
        self.entries: dict[HostAddr, BlockEntry] = {}
        self.failed: list[tuple[int, HostAddr, str]] = []
        self._retry: list[DetectionEvent] = []
        self.causes: dict[HostAddr, DetectionEvent] = {}
        sim.register("controller", self.on_detection_event)

    def submit(self, ev: DetectionEvent) -> None:
        """Channel entry point used by the sentinel."""
        self.sim.schedule_in(self.latency_us, "controller", ev)

    def on_detection_event(self, ev: DetectionEvent) -> list[BlockEntry]:
        now = self.sim.now
        pending, self._retry = self._retry, []
        applied = []
        for event in pending + [ev]:
            for addr in sorted(event.attackers, key=lambda a: a.value):
                if addr in self.entries:
                    continue
                try:
                    self.switch.install_rule(FlowRule(addr, now, self.hard_timeout))
                except RuleTableFull as exc:
                    self.failed.append((now, addr, str(exc)))
                    self.log(now, "BLOCK_ERROR", event.attack_class, [addr], str(exc))
                    logger.warning("rule for %s rejected: %s", addr, exc)
                    if event not in self._retry:
                        self._retry.append(event)
                    continue
                entry = BlockEntry(addr, now, event.attack_class,
                                   event.evidence.get(str(addr)))
                self.entries[addr] = entry
                self.causes[addr] = event
                self.log(now, "BLOCK", event.attack_class, [addr], "")
                applied.append(entry)
        return applied

    def blocked_set(self, now: int | None = None) -> list[BlockEntry]:
        now = self.sim.now if now is None else now
        if self.hard_timeout is not None:
            live = {r.match_src for r in self.switch.active_rules(now)}
            for addr in [a for a in self.entries if a not in live]:
                self.log(now, "EXPIRE", self.entries[addr].cause_class, [addr], "")
                del self.entries[addr]
        return sorted(self.entries.values(), key=lambda e: e.addr.value)
