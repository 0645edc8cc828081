"""
Per-iteration operation counts
==============================

FFT cost of the channels each processor handles plus the filter-update
arithmetic. The measured column counts the reference update directly.
"""

from soundzones.config import ExperimentConfig
from soundzones.experiment import complexity_report

rows = complexity_report(ExperimentConfig())
central = rows[0]
print(f"centralized: {central['additions']:.4g} additions, "
      f"{central['multiplications']:.4g} multiplications per iteration")

for system in ("system1", "system2"):
    nodes = [r for r in rows if r["system"] == system]
    worst = max(nodes, key=lambda r: r["additions"])
    print(f"\n{system}: {len(nodes)} nodes, busiest node {worst['node']} "
          f"({worst['additions'] / central['additions']:.1%} of the central additions)")
    for r in nodes:
        print(f"  node {r['node']}: M_k={r['M']:2d} L_k={r['L_k']} |N_k|={r['N_k']}  "
              f"adds {r['additions']:10.1f}  mults {r['multiplications']:10.1f}  "
              f"update {r['measured_additions']}/{r['measured_multiplications']}")

# how the FFT term scales with the transform length
for F in (1024, 3200, 4096):
    c = complexity_report(ExperimentConfig(window_len=F, algorithm="cpm"))[0]
    print(f"F={F:5d}: centralized additions {c['additions']:.4g}")
