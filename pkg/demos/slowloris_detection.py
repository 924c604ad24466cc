"""
Spotting slowloris connections from the mirror port
===================================================

Thirty-two sources each hold eight connections and send one header
fragment every thirty seconds. The sentinel sees many unfinished requests
with long, regular gaps. The one benign client on a bad network also
sends a fragmented header, but only one connection at a time, so it is
never reported.
"""

from pathlib import Path

from sdnmitigate import World, load_scenario

here = Path(__file__).resolve().parent
cfg = load_scenario(here.parent / "scenarios" / "slow_header.ini")
world = World(cfg)

# stop just before the first detection tick and look at the statistics.
# Most connections have sent a single fragment so far; the silence since
# then stands in for the gap, which is why the mean is still below 30 s.
world.sim.run_until(32_500_000)
sentinel = world.sentinel
stats = sentinel.source_stats()
agg = sentinel.aggregate()
print(f"slow header connections in view: {agg.slow_header_connections} "
      f"(threshold {cfg.thresholds.slow_fraction * cfg.server.table_capacity:.0f})")

attacker = world.attacks[0].sources[0]
s = stats[attacker]
print(f"\nattacker {attacker}: {s.incomplete_header} unfinished requests, "
      f"gap mean {s.gap_mean_s:.2f} s, cv {s.gap_cv:.4f}")

bad = world.benign.bad_network_addresses[0]
if bad in stats:
    b = stats[bad]
    print(f"bad-network client {bad}: {b.incomplete_header} unfinished request(s)")

report = world.run()
print(f"\nfirst event: {report.detections[0].attack_class} at "
      f"{report.detections[0].at / 1e6:.0f} s naming {len(report.detections[0].attackers)} sources")
print(f"blocked in total: {report.summary['blocked']}, "
      f"bad-network client blocked: {bad.value in report.block_times}")
