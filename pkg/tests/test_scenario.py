import dataclasses

import pytest
from hypothesis import given, settings, strategies as st

from sdnmitigate.scenario import ScenarioError, parse_scenario, serialize_scenario
from sdnmitigate.sentinel import SentinelConfig
from sdnmitigate.topology import LinkParams
from sdnmitigate.traffic import AttackConfig, BenignConfig
from sdnmitigate.victim import ServerConfig

from _runs import SCENARIO_DIR

MINIMAL = "[scenario]\nname = tiny\nseed = 4\nduration_s = 30\n"


def test_minimal_document_gets_defaults():
    cfg = parse_scenario(MINIMAL)
    assert (cfg.name, cfg.seed, cfg.duration_s) == ("tiny", 4, 30)
    assert cfg.server == ServerConfig()
    assert cfg.link == LinkParams()
    assert cfg.benign == BenignConfig()
    assert cfg.thresholds == SentinelConfig()
    assert cfg.attacks == () and cfg.attack_start_s is None
    assert cfg.protection_enabled is False and cfg.warmup_s == 15


def test_unknown_attack_kind_names_the_field():
    doc = MINIMAL + "\n[attack x]\nkind = udp_flood\nstart_s = 20\nduration_s = 5\n"
    with pytest.raises(ScenarioError) as err:
        parse_scenario(doc)
    assert err.value.field == "attack x.kind"
    assert err.value.line == 7
    assert "udp_flood" in str(err.value) and "line 7" in str(err.value)


@pytest.mark.parametrize("doc, field", [
    (MINIMAL + "colour = red\n", "scenario.colour"),
    (MINIMAL + "[server]\ntable_capacity = many\n", "server.table_capacity"),
    (MINIMAL + "[server]\ntable_capacity = 0\n", "server.table_capacity"),
    (MINIMAL + "[planets]\nx = 1\n", "planets"),
    ("[scenario]\nname = x\nseed = 1\n", "scenario.duration_s"),
    (MINIMAL + "protection = maybe\n", "scenario.protection"),
])
def test_parse_errors_identify_the_field(doc, field):
    with pytest.raises(ScenarioError) as err:
        parse_scenario(doc)
    assert err.value.field == field


def test_malformed_document_reports_line():
    with pytest.raises(ScenarioError) as err:
        parse_scenario("[scenario]\nname = a\nthis line has no separator\n")
    assert err.value.line == 3


def test_attack_must_fit_the_run():
    with pytest.raises(ScenarioError):
        parse_scenario(MINIMAL + "[attack a]\nkind = syn_flood\nstart_s = 20\nduration_s = 50\n")
    with pytest.raises(ScenarioError):
        parse_scenario(MINIMAL + "[attack a]\nkind = syn_flood\nstart_s = 10\nduration_s = 5\n")


@pytest.mark.parametrize("path", sorted(SCENARIO_DIR.glob("*.ini")), ids=lambda p: p.stem)
def test_shipped_scenarios_round_trip(path):
    cfg = parse_scenario(path.read_text())
    text = serialize_scenario(cfg)
    assert parse_scenario(text) == cfg
    assert serialize_scenario(parse_scenario(text)) == text


def test_overrides():
    cfg = parse_scenario(MINIMAL)
    assert cfg.with_overrides(protection=True, seed=9).protection_enabled is True
    assert cfg.with_overrides(seed=9).seed == 9
    assert cfg.with_overrides() == cfg


def test_sentinel_config_takes_server_capacity():
    cfg = parse_scenario(MINIMAL + "[server]\ntable_capacity = 64\n")
    s = cfg.sentinel_config()
    assert s.table_capacity_estimate == 64 and s.sustainable_heavy_rate == 10


@settings(max_examples=50, deadline=None)
@given(
    seed=st.integers(0, 2**63),
    duration=st.floats(30, 500, allow_nan=False),
    capacity=st.integers(1, 5000),
    rate=st.floats(0.1, 1e4, allow_nan=False),
    kind=st.sampled_from(["syn_flood", "http_flood", "tls_flood", "slow_header", "slow_body"]),
    jitter=st.floats(0, 0.99),
    protection=st.booleans(),
    rule_timeout=st.one_of(st.none(), st.floats(1, 100)),
)
def test_round_trip_property(seed, duration, capacity, rate, kind, jitter, protection, rule_timeout):
    cfg = parse_scenario(MINIMAL)
    cfg = dataclasses.replace(
        cfg, seed=seed, duration_s=duration, protection_enabled=protection,
        rule_timeout_s=rule_timeout,
        server=ServerConfig(table_capacity=capacity),
        attacks=(AttackConfig(kind, 20, duration - 20, rate_pps=rate, jitter_fraction=jitter),),
        attack_labels=("main",))
    assert parse_scenario(serialize_scenario(cfg)) == cfg
