"""
Half-open occupancy under a trickle of spoofed SYNs
===================================================

Below saturation every spoofed SYN holds one slot for exactly the SYN
timeout, so the table settles around rate x timeout entries.
"""

import numpy as np

from sdnmitigate import AttackConfig, ScenarioConfig, run_scenario

T = 30.0
rows = []
for rate in (1, 2, 5, 8):
    cfg = ScenarioConfig(name=f"trickle-{rate}", seed=rate, duration_s=150,
                         attacks=(AttackConfig("syn_flood", 20, 130, rate_pps=rate),))
    report = run_scenario(cfg)
    # skip two timeouts of warm-up
    occ = [s.occupancy for s in report.samples if s.time_s >= 20 + 2 * T]
    rows.append((rate, rate * T, np.mean(occ), np.min(occ), np.max(occ)))

print("rate  r*T   mean    min  max")
for rate, law, mean, lo, hi in rows:
    print(f"{rate:4d} {law:5.0f} {mean:7.2f} {lo:5d} {hi:4d}")

# the benign clients add their own short-lived connections on top
