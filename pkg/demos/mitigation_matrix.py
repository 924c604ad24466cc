"""
All shipped scenarios with the defense switched on
==================================================

For each attack: which class was detected first, how long detection and
recovery took, and how benign clients fared before, during and after.
"""

from pathlib import Path

from sdnmitigate import load_scenario, run_scenario

here = Path(__file__).resolve().parent
names = ["benign", "syn_flood", "http_flood", "tls_flood", "slow_header", "slow_body"]

print(f"{'scenario':12s} {'first class':12s} {'ttd':>5s} {'ttm':>5s} "
      f"{'before':>7s} {'during':>7s} {'after':>7s} {'blocked':>7s}")
for name in names:
    report = run_scenario(load_scenario(here.parent / "scenarios" / f"{name}.ini"))
    s = report.summary
    first = report.detections[0].attack_class if report.detections else "-"

    def fmt(x):
        return "-" if x is None else f"{x:g}"

    print(f"{name:12s} {first:12s} {fmt(s['time_to_detection_s']):>5s} "
          f"{fmt(s['time_to_mitigation_s']):>5s} {fmt(s['benign_success_before']):>7s} "
          f"{fmt(s['benign_success_during']):>7s} {fmt(s['benign_success_after']):>7s} "
          f"{s['blocked']:7d}")
