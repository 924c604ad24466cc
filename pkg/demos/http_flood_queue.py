"""
HTTP flood against an expensive endpoint
========================================

Fifty heavy requests per second against a CPU that can serve ten: the
backlog grows by forty requests every second, so each request waits a
little longer than the one before, until the RTT probe gives up.
"""

from pathlib import Path

from sdnmitigate import World, load_scenario

here = Path(__file__).resolve().parent
cfg = load_scenario(here.parent / "scenarios" / "http_flood.ini").with_overrides(protection=False)
world = World(cfg)
report = world.run()

srv = cfg.server
atk = cfg.attacks[0]
print(f"offered load: {atk.rate_pps * srv.heavy_request_cost / srv.cpu_capacity_ups:.1f}x capacity")

print("\nprobes around the attack start")
for p in world.probe_outcomes[17:26]:
    rtt = "" if p.rtt is None else f"{p.rtt / 1000:9.1f} ms"
    print(f"  issued {p.issued_at / 1e6:5.1f} s  {p.status:8s} {rtt}")

spans = [s / 1e6 for _, s in world.victim.service_spans[:2000:250]]
print("\ntime in the server for every 250th job (s):")
print("  " + "  ".join(f"{s:.1f}" for s in spans))

print("\nCPU utilization, seconds 18..26:")
print("  " + "  ".join(f"{s.cpu_util:.2f}" for s in report.samples[18:27]))
