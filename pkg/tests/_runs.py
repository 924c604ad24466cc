"""Cached scenario runs shared by the scenario-level tests."""

from __future__ import annotations

import functools
import time
from pathlib import Path

from sdnmitigate.runner import World
from sdnmitigate.scenario import ScenarioConfig, load_scenario

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"
ATTACKS = ("syn_flood", "http_flood", "tls_flood", "slow_header", "slow_body")


def config(name: str, protection: bool | None = None) -> ScenarioConfig:
    return load_scenario(SCENARIO_DIR / f"{name}.ini").with_overrides(protection=protection)


@functools.lru_cache(maxsize=None)
def run(name: str, protection: bool | None = None):
    """Return ``(world, report, wall_seconds)`` for one scenario file."""
    world = World(config(name, protection))
    t0 = time.perf_counter()
    report = world.run()
    return world, report, time.perf_counter() - t0


def window(samples, lo: float, hi: float):
    """Samples with lo <= time_s < hi."""
    return [s for s in samples if lo <= s.time_s < hi]
