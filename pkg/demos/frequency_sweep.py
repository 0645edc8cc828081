"""
Steady state across frequency
=============================

A reduced sweep by default (every 500 Hz, 3 runs); pass ``full`` for the
40-bin, 10-run version, which takes several minutes on one core.
"""

import sys

from soundzones.config import ExperimentConfig
from soundzones.experiment import frequency_sweep

full = len(sys.argv) > 1 and sys.argv[1] == "full"
config = ExperimentConfig(step_size="auto", monte_carlo_runs=10 if full else 3,
                          frequencies=None if full else tuple(range(500, 4001, 500)))
rs = frequency_sweep(config)

print(f"{'freq':>6}{'cpm':>10}{'sys1':>10}{'sys2':>10}{'worst gap':>11}")
for f in config.sweep_frequencies:
    if f in rs.failed_bins:
        print(f"{f:6.0f}  failed: {rs.failed_bins[f]}")
        continue
    vals = [rs.steady(f, label)["nmse_ss_db"] for label in ("cpm", "dpmd-system1",
                                                            "dpmd-system2")]
    gap = max(abs(v - vals[0]) for v in vals[1:])
    print(f"{f:6.0f}" + "".join(f"{v:10.2f}" for v in vals) + f"{gap:11.2f}")
