import pytest
from hypothesis import given, settings, strategies as st

from sdnmitigate.engine import Simulator, seconds
from sdnmitigate.topology import (
    DROPPED_BY_RULE, ROUTING_ERROR, AddressPlan, FlowRule, HostAddr, Kind, LinkParams, Packet,
    Payload, Role, RuleTableFull, Switch, HTTP_GET,
)


def make(**kw):
    sim = Simulator()
    plan = AddressPlan()
    sw = Switch(sim, plan, **kw)
    got = []
    sw.attach(plan.victim, got.append)
    return sim, plan, sw, got


def pkt(sim, src, dst, size=40, kind=Kind.SYN, sport=1000):
    return Packet(sim.now, src, dst, sport, 80, kind, None, size)


def test_address_plan():
    plan = AddressPlan()
    assert str(plan.sentinel) == "10.0.0.1"
    assert str(plan.victim) == "10.0.0.2"
    assert str(plan.prober) == "10.0.0.4"
    benign = plan.allocate(Role.BENIGN, 2)
    attackers = plan.allocate(Role.ATTACKER, 300)
    assert [str(a) for a in benign] == ["10.1.0.1", "10.1.0.2"]
    assert str(attackers[0]) == "10.2.0.1" and str(attackers[-1]) == "10.2.1.44"
    assert plan.allocate(Role.BENIGN, 1)[0].value == benign[-1].value + 1
    assert plan.role_of(attackers[5].value) is Role.ATTACKER
    assert plan.role_of(plan.victim.value) is Role.VICTIM
    assert plan.role_of(1) is None


def test_packet_validation():
    plan = AddressPlan()
    with pytest.raises(ValueError):
        Packet(0, plan.prober, plan.victim, 1, 80, Kind.SYN, size_bytes=20)
    with pytest.raises(ValueError):
        Packet(0, plan.prober, plan.victim, 1, 80, Kind.ACK, Payload(HTTP_GET))


def test_idle_link_delay():
    sim, plan, sw, got = make()
    at = sw.forward(pkt(sim, plan.prober, plan.victim, 1500))
    # 1500 B at 13 Gbit/s is 0.923 us, rounded up to 1
    assert at == 0 + 50 + 1
    sim.run_until(100)
    assert len(got) == 1


def test_back_to_back_packets_queue_fifo():
    sim, plan, sw, got = make()
    times = [sw.forward(pkt(sim, plan.prober, plan.victim, 1500, sport=i)) for i in range(10)]
    assert [b - a for a, b in zip(times, times[1:])] == [1] * 9
    sim.run_until(1000)
    assert [p.src_port for p in got] == list(range(10))


def test_slow_link_serialization():
    sim, plan, sw, _ = make(link=LinkParams(bandwidth_bps=8_000_000, propagation_us=10))
    assert sw.forward(pkt(sim, plan.prober, plan.victim, 1000)) == 1000 + 10


def test_drop_rule_matches_source_only():
    sim, plan, sw, got = make()
    a, b = plan.allocate(Role.ATTACKER, 2)
    sw.attach_pool_default(Role.ATTACKER, lambda p: None)
    assert sw.install_rule(FlowRule(a, 0)) is True
    assert sw.install_rule(FlowRule(a, 0)) is False
    assert sw.forward(pkt(sim, a, plan.victim)) == DROPPED_BY_RULE
    assert isinstance(sw.forward(pkt(sim, b, plan.victim)), int)
    sim.run_until(1000)
    assert [p.src for p in got] == [b]
    assert sw.counters.dropped_by_rule == 1


def test_rule_applies_to_packets_already_in_flight():
    sim, plan, sw, got = make()
    (a,) = plan.allocate(Role.ATTACKER, 1)
    sw.forward(pkt(sim, a, plan.victim))
    sw.install_rule(FlowRule(a, 0))
    sim.run_until(1000)
    assert got == []


def test_rule_expiry():
    sim, plan, sw, got = make()
    (a,) = plan.allocate(Role.ATTACKER, 1)
    sw.install_rule(FlowRule(a, 0, hard_timeout=seconds(10)))
    sim.run_until(seconds(11))
    assert isinstance(sw.forward(pkt(sim, a, plan.victim)), int)
    sim.run_until(seconds(12))
    assert len(got) == 1
    assert sw.active_rules(sim.now) == []


def test_three_hundred_rules():
    sim, plan, sw, got = make()
    sources = plan.allocate(Role.ATTACKER, 300)
    for s in reversed(sources):
        sw.install_rule(FlowRule(s, 0))
    rules = sw.active_rules(0)
    assert len(rules) == 300
    assert [r.match_src for r in rules] == sorted(sources, key=lambda s: s.value)
    assert all(sw.forward(pkt(sim, s, plan.victim)) == DROPPED_BY_RULE for s in sources)


def test_active_rules_purges_expired():
    sim, plan, sw, _ = make()
    assert sw.active_rules(0) == []
    a, b = plan.allocate(Role.ATTACKER, 2)
    sw.install_rule(FlowRule(a, 0, hard_timeout=5))
    sw.install_rule(FlowRule(b, 0))
    assert [r.match_src for r in sw.active_rules(10)] == [b]


def test_rule_table_limit():
    sim, plan, sw, _ = make(max_rules=2)
    a, b, c = plan.allocate(Role.ATTACKER, 3)
    sw.install_rule(FlowRule(a, 0))
    sw.install_rule(FlowRule(b, 0, hard_timeout=5))
    with pytest.raises(RuleTableFull):
        sw.install_rule(FlowRule(c, 0))
    sim.run_until(10)
    assert sw.install_rule(FlowRule(c, 10)) is True


def test_unroutable_destination():
    sim, plan, sw, _ = make()
    stranger = HostAddr(12345, Role.BENIGN)
    assert sw.forward(pkt(sim, plan.victim, stranger)) == ROUTING_ERROR
    assert len(sw.routing_errors) == 1


def test_mirror_sees_pool_traffic_only():
    sim, plan, sw, got = make()
    tapped = []
    sw.set_tap(tapped.append)
    (b,) = plan.allocate(Role.BENIGN, 1)
    sw.attach(b, lambda p: None)
    sw.attach(plan.prober, lambda p: None)
    sw.forward(pkt(sim, b, plan.victim))
    sw.forward(pkt(sim, plan.victim, b))
    sw.forward(pkt(sim, plan.prober, plan.victim))
    sim.run_until(1000)
    assert [(p.src, p.dst) for p in tapped] == [(b, plan.victim), (plan.victim, b)]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(40, 1500), st.integers(0, 500)),
                min_size=1, max_size=80),
       st.integers(0, 2), st.integers(0, 3000))
def test_switch_properties(sends, blocked_idx, block_at):
    sim, plan, sw, got = make(link=LinkParams(bandwidth_bps=100_000_000))
    sources = plan.allocate(Role.ATTACKER, 3)
    tapped = []
    sw.set_tap(tapped.append)
    delivered = []
    sw.attach(plan.victim, lambda p: delivered.append((sim.now, p)))
    sim.register("send", lambda args: sw.forward(
        Packet(sim.now, sources[args[0]], plan.victim, 1, 80, Kind.SYN, None, args[1])))
    sim.register("block", lambda _: sw.install_rule(FlowRule(sources[blocked_idx], sim.now)))
    for i, size, t in sends:
        sim.schedule(t, "send", (i, size))
    sim.schedule(block_at, "block")
    sim.run_until(10**6)
    for t, p in delivered:
        assert t - p.at >= sw.link.propagation_us
        assert not (p.src == sources[blocked_idx] and t >= block_at)
    # mirror completeness: every delivered pool packet exactly once, same object
    assert [id(p) for _, p in delivered] == [id(p) for p in tapped]
