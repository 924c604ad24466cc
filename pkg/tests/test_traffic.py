from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdnmitigate.engine import US_PER_S, Simulator, seconds
from sdnmitigate.topology import AddressPlan, Kind, Role, Switch, sink
from sdnmitigate.traffic import (
    REFUSED, SUCCESS, AttackConfig, BenignConfig, spawn_attack, spawn_benign, spawn_http_flood,
    spawn_slow_body, spawn_slow_header, spawn_syn_flood, spawn_tls_flood,
)
from sdnmitigate.victim import Phase, ServerConfig, Victim


class Net:
    def __init__(self, seed=1, server=None):
        self.sim = Simulator(seed=seed)
        self.plan = AddressPlan()
        self.switch = Switch(self.sim, self.plan)
        self.switch.attach_pool_default(Role.ATTACKER, sink)
        self.victim = Victim(self.sim, self.switch, self.plan.victim, server or ServerConfig())

    def attack(self, logged=True, **kw):
        a = spawn_attack(self.sim, self.switch, self.plan, self.plan.victim, AttackConfig(**kw))
        if logged:
            a.sent_log = []
        return a

    def benign(self, **kw):
        return spawn_benign(self.sim, self.switch, self.plan, self.plan.victim, BenignConfig(**kw))


def test_config_validation():
    with pytest.raises(ValueError):
        AttackConfig("udp_flood", 0, 1)
    with pytest.raises(ValueError):
        AttackConfig("syn_flood", 0, 1, rate_pps=0)
    with pytest.raises(ValueError):
        AttackConfig("slow_header", 0, 1, slow_interval_s=0)
    with pytest.raises(ValueError):
        AttackConfig("syn_flood", 0, 1, jitter_fraction=1.0)
    with pytest.raises(ValueError):
        BenignConfig(client_count=1, bad_network_clients=2)
    assert AttackConfig("syn_flood", 5, 10).end_s == 15


def test_spawn_helpers_check_kind():
    net = Net()
    cfg = AttackConfig("http_flood", 0, 1)
    for fn in (spawn_syn_flood, spawn_tls_flood, spawn_slow_header, spawn_slow_body):
        with pytest.raises(ValueError):
            fn(net.sim, net.switch, net.plan, net.plan.victim, cfg)
    assert spawn_http_flood(net.sim, net.switch, net.plan, net.plan.victim, cfg).cfg is cfg


def test_syn_flood_count_and_round_robin():
    net = Net()
    a = net.attack(kind="syn_flood", start_s=1, duration_s=30, rate_pps=100, source_count=300)
    net.sim.run_until(seconds(40))
    assert len(a.sent_log) == 3000
    per_source = Counter(src for _, src, _ in a.sent_log)
    assert set(per_source.values()) == {10}
    assert {k for _, _, k in a.sent_log} == {"SYN"}  # spoofed sources never ACK or send data
    times = [t for t, _, _ in a.sent_log]
    assert min(times) >= seconds(1) and max(times) < seconds(31)


def test_zero_duration_sends_nothing():
    net = Net()
    a = net.attack(kind="syn_flood", start_s=1, duration_s=0)
    net.sim.run_until(seconds(5))
    assert a.sent_log == []


@settings(max_examples=25, deadline=None)
@given(st.floats(1, 400), st.floats(0.5, 20), st.integers(1, 50))
def test_pacing_accuracy_without_jitter(rate, duration, sources):
    net = Net()
    a = net.attack(kind="syn_flood", start_s=0.5, duration_s=duration, rate_pps=rate,
                   source_count=sources, jitter_fraction=0)
    net.sim.run_until(seconds(0.5 + duration + 1))
    assert abs(len(a.sent_log) - rate * duration) <= 1


def test_http_flood_offered_load_and_requests():
    net = Net()
    cfg = ServerConfig()
    a = net.attack(kind="http_flood", start_s=1, duration_s=10, rate_pps=50, source_count=10)
    assert 50 * cfg.heavy_request_cost / cfg.cpu_capacity_ups == 5
    net.sim.run_until(seconds(12))
    assert a.requests_sent == 500
    heavy = Counter(src for _, src, k in a.sent_log if k == "http-get")
    assert set(heavy.values()) == {50}


def test_http_flood_single_source():
    net = Net()
    a = net.attack(kind="http_flood", start_s=0, duration_s=4, rate_pps=5, source_count=1)
    net.sim.run_until(seconds(60))
    assert a.requests_sent == 20
    # offered load 0.5: every request is served in its own 0.1 s
    assert {s for _, s in net.victim.service_spans} == {100_000}


def test_tls_flood_renegotiations_per_source():
    net = Net()
    a = net.attack(kind="tls_flood", start_s=1, duration_s=10, rate_pps=40, source_count=20)
    net.sim.run_until(seconds(12))
    reneg = Counter(src for _, src, k in a.sent_log if k == "tls-renegotiate")
    assert set(reneg.values()) == {40 * 10 // 20}
    assert a.renegotiations == 400


def test_tls_flood_zero_duration_handshakes_only():
    net = Net()
    a = net.attack(kind="tls_flood", start_s=1, duration_s=0, rate_pps=40, source_count=3)
    net.sim.run_until(seconds(3))
    kinds = Counter(k for _, _, k in a.sent_log)
    assert kinds == {"SYN": 3, "ACK": 3, "tls-handshake": 3}


def test_slowloris_fills_table_and_parks():
    net = Net()
    a = net.attack(kind="slow_header", start_s=1, duration_s=100, source_count=32,
                   connections_per_source=8, slow_interval_s=30)
    net.sim.run_until(seconds(60))
    v = net.victim
    assert v.occupancy == 256 == a.open_connections
    assert {r.phase for r in v.table.values()} == {Phase.RECEIVING_HEADER}
    gaps = np.array([g for r in v.table.values() for g in r.inter_packet_gaps]) / US_PER_S
    assert len(gaps) == 256
    assert abs(gaps.mean() - 30) < 0.5
    assert gaps.std() / gaps.mean() <= 2 * 0.02


def test_slow_body_phase_sequence():
    net = Net()
    net.attack(kind="slow_body", start_s=1, duration_s=100, source_count=1,
               connections_per_source=1, slow_interval_s=30)
    net.sim.run_until(seconds(1.01))
    (rec,) = net.victim.table.values()
    assert rec.phase is Phase.RECEIVING_BODY
    net.sim.run_until(seconds(95))
    assert rec.phase is Phase.RECEIVING_BODY
    assert len(rec.inter_packet_gaps) == 3


def test_occupancy_is_capped_by_capacity():
    net = Net(server=ServerConfig(table_capacity=100))
    net.attack(kind="slow_header", start_s=1, duration_s=100, source_count=32,
               connections_per_source=8)
    net.sim.run_until(seconds(30))
    assert net.victim.occupancy == 100


@settings(max_examples=10, deadline=None)
@given(st.floats(0.0, 0.3), st.integers(1, 5))
def test_slow_gap_regularity(jitter, sources):
    net = Net()
    a = net.attack(kind="slow_header", start_s=0, duration_s=200, source_count=sources,
                   connections_per_source=2, slow_interval_s=10, jitter_fraction=jitter)
    net.sim.run_until(seconds(199))
    gaps = []
    for src in {s for _, s, _ in a.sent_log}:
        times = [t for t, s, k in a.sent_log if s == src and k == "http-header-fragment"]
        # one stream per source interleaves two connections: pair by position
        gaps += list(np.diff(times[0::2])) + list(np.diff(times[1::2]))
    gaps = np.array(gaps, dtype=float)
    assert gaps.std() / gaps.mean() <= 2 * jitter + 1e-9


def test_actor_isolation():
    def timeline(with_second):
        net = Net(seed=5)
        keep = net.attack(kind="syn_flood", start_s=1, duration_s=5, rate_pps=50, source_count=30)
        if with_second:
            net.attack(kind="http_flood", start_s=2, duration_s=5, rate_pps=20, source_count=4)
        net.sim.run_until(seconds(10))
        return keep.sent_log

    assert timeline(False) == timeline(True)


def test_single_benign_client_idle_server():
    net = Net()
    pool = net.benign(client_count=1, bad_network_clients=0)
    net.sim.run_until(seconds(60))
    assert pool.outcomes and all(o.outcome == SUCCESS for o in pool.outcomes)
    # the GET queues behind the ACK sent at the same instant, then
    # request delivery (300 B) + light job (10 ms) + response delivery (1500 B)
    link = net.switch.link
    oracle = (link.serialization_us(40) + link.propagation_us + link.serialization_us(300) + 10_000
              + link.propagation_us + link.serialization_us(1500))
    assert {o.response_time for o in pool.outcomes} == {oracle}


def test_bad_network_header_completes_after_two_gaps():
    net = Net()
    pool = net.benign(client_count=1, bad_network_clients=1, bad_gap_s=10)
    pool.sent_log = []
    net.sim.run_until(seconds(60))
    frags = [t for t, _, k in pool.sent_log if k == "http-header-fragment"][:3]
    assert [b - a for a, b in zip(frags, frags[1:])] == [seconds(10)] * 2
    assert pool.outcomes[0].outcome == SUCCESS
    assert pool.outcomes[0].resolved_at > frags[2]


def test_benign_refused_when_table_full():
    net = Net(server=ServerConfig(table_capacity=1))
    net.attack(kind="slow_header", start_s=0, duration_s=60, source_count=1,
               connections_per_source=1)
    pool = net.benign(client_count=3, bad_network_clients=0)
    net.sim.run_until(seconds(30))
    assert pool.outcomes and {o.outcome for o in pool.outcomes} == {REFUSED}
