"""Wires a scenario into a simulated network, runs it and collects the report."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .controller import Controller
from .engine import US_PER_S, Simulator, seconds
from .scenario import ScenarioConfig
from .sentinel import DetectionEvent, Prober, ProbeOutcome, ProbeState, Sentinel
from .topology import AddressPlan, Role, Switch, sink
from .traffic import SUCCESS, Attack, BenignPool, spawn_attack
from .victim import Victim

RECOVERY_LEVEL = 0.95
RECOVERY_HOLD_S = 10


class InvariantViolation(RuntimeError):
    """A simulation invariant broke; ``state`` holds a diagnostic dump."""

    def __init__(self, message: str, state: dict):
        super().__init__(message)
        self.state = state


@dataclass
class Sample:
    time_s: int
    probe_rtt_ms: Optional[float]
    probe_status: str
    cpu_util: float
    occupancy: int
    benign_success_rate: float
    blocked_count: int
    packet_rate_pps: int


@dataclass(frozen=True)
class LogEvent:
    time_us: int
    event: str
    attack_class: str
    addresses: tuple[str, ...]
    detail: str = ""


@dataclass
class RunReport:
    name: str
    samples: list[Sample]
    events: list[LogEvent]
    summary: dict
    detections: list[DetectionEvent] = field(default_factory=list)
    block_times: dict = field(default_factory=dict)  # addr value -> blocked_at (us)
    victim_log: list = field(default_factory=list)  # (delivered_at, src value)


class World:
    """All components of one run, built from a ScenarioConfig.

    Tests reach into the attributes; ``run`` produces the RunReport.
    """

    def __init__(self, cfg: ScenarioConfig, trace: bool = False, keep_mirror_log: bool = False):
        self.cfg = cfg
        self.sim = Simulator(seed=cfg.seed, trace=trace)
        self.plan = AddressPlan()
        self.switch = Switch(self.sim, self.plan, cfg.link)
        self.switch.attach_pool_default(Role.ATTACKER, sink)
        self.log: list[LogEvent] = []
        self.victim = Victim(self.sim, self.switch, self.plan.victim, cfg.server)

        scfg = cfg.sentinel_config()
        self.probe_state = ProbeState(scfg.threshold_factor, scfg.consecutive_needed,
                                      scfg.probe_interval_s, scfg.probe_timeout_s)
        self.prober = Prober(self.sim, self.switch, self.plan.prober, self.plan.victim,
                             self.probe_state)
        self.probe_outcomes: list[ProbeOutcome] = []
        self.prober.listeners.append(self.probe_outcomes.append)

        self.benign = BenignPool(self.sim, self.switch, self.plan, self.plan.victim, cfg.benign)
        self.attacks: list[Attack] = [
            spawn_attack(self.sim, self.switch, self.plan, self.plan.victim, a, name=f"attack.{label}")
            for label, a in zip(cfg.attack_labels, cfg.attacks)
        ]

        self.controller: Optional[Controller] = None
        self.sentinel: Optional[Sentinel] = None
        if cfg.protection_enabled:
            timeout = None if cfg.rule_timeout_s is None else seconds(cfg.rule_timeout_s)
            self.controller = Controller(self.sim, self.switch, timeout, log=self._log)
        if cfg.protection_enabled or cfg.sentinel_observe_only:
            emit = self.controller.submit if self.controller else None
            self.sentinel = Sentinel(self.sim, self.switch, self.plan.victim, self.prober, scfg,
                                     cfg.warmup_s, emit=emit, log=self._log,
                                     keep_mirror_log=keep_mirror_log)

        self.samples: list[Sample] = []
        self._outcome_idx = 0
        self._probe_idx = 0
        self._received_seen = 0
        self._last_rate = 1.0
        self.sim.register("sampler", self._sample)
        self.sim.schedule(0, "sampler", None)

    def _log(self, time_us, event, attack_class, addresses, detail) -> None:
        self.log.append(LogEvent(time_us, event, attack_class,
                                 tuple(str(a) for a in addresses), detail))

    # sampling

    def _sample(self, _payload) -> None:
        now = self.sim.now
        v = self.victim.metrics_sample(now)

        outcomes = self.benign.outcomes
        new = outcomes[self._outcome_idx:]
        self._outcome_idx = len(outcomes)
        if new:
            self._last_rate = sum(o.outcome == SUCCESS for o in new) / len(new)

        probes = self.probe_outcomes[self._probe_idx:]
        self._probe_idx = len(self.probe_outcomes)
        rtt_ms, status = None, "none"
        if probes:
            last = probes[-1]
            status = last.status
            if last.rtt is not None:
                rtt_ms = last.rtt / 1000.0

        received = self.victim.received
        rate = received - self._received_seen
        self._received_seen = received

        blocked = 0
        if self.controller is not None:
            blocked = len(self.controller.blocked_set(now))
            rules = len(self.switch.active_rules(now))
            if blocked != rules:
                raise InvariantViolation("blocked set and flow table disagree",
                                         self.diagnostics())
        if self.victim.occupancy > self.victim.cfg.table_capacity:
            raise InvariantViolation("connection table over capacity", self.diagnostics())
        if not 0.0 <= v.cpu_utilization <= 1.0:
            raise InvariantViolation("cpu utilization outside [0, 1]", self.diagnostics())

        self.samples.append(Sample(now // US_PER_S, rtt_ms, status, v.cpu_utilization,
                                   v.occupancy, self._last_rate, blocked, rate))
        if now + US_PER_S <= seconds(self.cfg.duration_s):
            self.sim.schedule(now + US_PER_S, "sampler", None)

    def diagnostics(self) -> dict:
        v = self.victim
        return {
            "now_us": self.sim.now,
            "pending_events": self.sim.pending,
            "occupancy": v.occupancy,
            "cpu_queue": len(v.queue),
            "victim_counters": dict(sorted(v.counters.items())),
            "closed": dict(sorted(v.closed.items())),
            "rules": len(self.switch.rules),
            "blocked": 0 if self.controller is None else len(self.controller.entries),
        }

    def check_invariants(self) -> None:
        v = self.victim
        accepted = v.counters["accepted"]
        if accepted != sum(v.closed.values()) + v.occupancy:
            raise InvariantViolation("accepted SYNs != closed + live", self.diagnostics())
        if self.controller is not None:
            for addr, entry in self.controller.entries.items():
                if addr not in self.switch.rules:
                    raise InvariantViolation(f"block entry {addr} has no rule", self.diagnostics())

    def run(self) -> RunReport:
        self.sim.run_until(seconds(self.cfg.duration_s))
        self.check_invariants()
        return self.report()

    # reporting

    def report(self) -> RunReport:
        block_times = {}
        if self.controller is not None:
            block_times = {a.value: e.blocked_at for a, e in self.controller.entries.items()}
        detections = list(self.sentinel.events) if self.sentinel is not None else []
        return RunReport(self.cfg.name, list(self.samples), list(self.log), self.summary(),
                         detections, block_times, list(self.switch.victim_log or []))

    def summary(self) -> dict:
        cfg = self.cfg
        start = cfg.attack_start_s
        detect_times = [e.time_us for e in self.log if e.event == "DETECT"]
        block_times = [e.time_us for e in self.log if e.event == "BLOCK"]
        first_detect = detect_times[0] / US_PER_S if detect_times else None
        first_block = block_times[0] / US_PER_S if block_times else None

        ttd = None if (first_detect is None or start is None) else first_detect - start
        recovered_at = None
        if first_detect is not None:
            recovered_at = recovery_time(self.samples, first_detect)
        ttm = None if (recovered_at is None or start is None) else recovered_at - start

        outcomes = self.benign.outcomes

        def rate(lo: float, hi: float | None):
            sel = [o for o in outcomes
                   if o.resolved_at >= seconds(lo) and (hi is None or o.resolved_at < seconds(hi))]
            if not sel:
                return None
            return round(sum(o.outcome == SUCCESS for o in sel) / len(sel), 6)

        if start is None:
            before, during, after = rate(0, None), None, None
        else:
            before = rate(0, start)
            during = rate(start, recovered_at)
            after = rate(recovered_at, None) if recovered_at is not None else None

        full_at = self.victim.first_full_at
        cpu = [s.cpu_util for s in self.samples]
        return {
            "name": cfg.name,
            "seed": cfg.seed,
            "duration_s": cfg.duration_s,
            "protection_enabled": cfg.protection_enabled,
            "attack_start_s": start,
            "time_to_detection_s": _r(ttd),
            "time_to_mitigation_s": _r(ttm),
            "first_detection_s": _r(first_detect),
            "first_block_s": _r(first_block),
            "benign_success_before": before,
            "benign_success_during": during,
            "benign_success_after": after,
            "benign_requests": len(outcomes),
            "peak_occupancy": self.victim.peak_occupancy,
            "table_full_s": _r(None if full_at is None else full_at / US_PER_S),
            "peak_cpu": _r(max(cpu) if cpu else 0.0),
            "detections": len(detect_times),
            "blocked": len(block_times),
            "alarms": sum(e.event == "ALARM" for e in self.log),
            "all_clear": sum(e.event == "ALL_CLEAR" for e in self.log),
            "post_block_deliveries": self.post_block_deliveries(),
            "routing_errors": len(self.switch.routing_errors),
            "packets_forwarded": self.switch.counters.forwarded,
            "packets_dropped_by_rule": self.switch.counters.dropped_by_rule,
        }

    def post_block_deliveries(self) -> int:
        if self.controller is None or not self.switch.victim_log:
            return 0
        blocked = {a.value: e.blocked_at for a, e in self.controller.entries.items()}
        return sum(1 for t, src in self.switch.victim_log if src in blocked and t > blocked[src])


def _r(x: float | None) -> float | None:
    return None if x is None else round(float(x), 6)


def recovery_time(samples: list[Sample], not_before_s: float,
                  level: float = RECOVERY_LEVEL, hold_s: int = RECOVERY_HOLD_S) -> Optional[float]:
    """First sample time >= ``not_before_s`` from which the benign success
    rate stays >= ``level`` for ``hold_s`` seconds."""
    times = np.array([s.time_s for s in samples])
    ok = np.array([s.benign_success_rate >= level for s in samples])
    for i, t in enumerate(times):
        if t < not_before_s:
            continue
        stop = t + hold_s
        if stop > times[-1]:
            return None
        window = ok[(times >= t) & (times <= stop)]
        if window.all():
            return float(t)
    return None


def run_scenario(cfg: ScenarioConfig) -> RunReport:
    return World(cfg).run()


# ---------------------------------------------------------------------------
# output files

SAMPLES_HEADER = ("time_s,probe_rtt_ms,probe_status,cpu_util,occupancy,"
                  "benign_success_rate,blocked_count,packet_rate_pps")
EVENTS_HEADER = "time_s,event,attack_class,addresses,detail"


def format_samples(samples: list[Sample]) -> str:
    lines = [SAMPLES_HEADER]
    for s in samples:
        rtt = "" if s.probe_rtt_ms is None else f"{s.probe_rtt_ms:.3f}"
        lines.append(f"{s.time_s},{rtt},{s.probe_status},{s.cpu_util:.6f},{s.occupancy},"
                     f"{s.benign_success_rate:.6f},{s.blocked_count},{s.packet_rate_pps}")
    return "\n".join(lines) + "\n"


def format_events(events: list[LogEvent]) -> str:
    lines = [EVENTS_HEADER]
    for e in events:
        lines.append(f"{e.time_us / US_PER_S:.6f},{e.event},{e.attack_class},"
                     f"{' '.join(e.addresses)},{e.detail}")
    return "\n".join(lines) + "\n"


def format_summary(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"


def emit_report(report: RunReport, directory: str | os.PathLike) -> list[Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "samples.csv": format_samples(report.samples),
        "events.log": format_events(report.events),
        "summary.json": format_summary(report.summary),
    }
    written = []
    for name, text in files.items():
        path = out / name
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        written.append(path)
    return written
