"""
Learning curves at 1 kHz
========================

Centralized LMS pressure matching against the two diffusion networks, all
seeing the same perturbed ATFs and noisy targets in every run.
"""

import sys

import numpy as np

from soundzones.config import ExperimentConfig
from soundzones.experiment import iterations_to_reach, run_monte_carlo

runs = int(sys.argv[1]) if len(sys.argv) > 1 else 10

# oracle targets, 20 dB SNR, ATF error variance 0.0707, half the stability bound
config = ExperimentConfig(step_size="auto", monte_carlo_runs=runs, iterations=5000)
rs = run_monte_carlo(config, 1000.0)
print(f"step size per run: {np.round(rs.step_sizes[1000.0], 4)}")

checkpoints = [0, 10, 50, 100, 500, 1000, 4999]
print(f"\n{'iteration':>10}" + "".join(f"{label:>16}" for label in rs.labels))
for n in checkpoints:
    row = [rs.curve_stats(1000.0, label)[0][n] for label in rs.labels]
    print(f"{n:>10}" + "".join(f"{v:16.2f}" for v in row))

# steady state over the last 10% of iterations, control vs validation points
print()
for label in rs.labels:
    c, v = rs.steady(1000.0, label), rs.steady(1000.0, label, "validation")
    first = iterations_to_reach(rs.curves[(1000.0, label, "control")]["nmse"], -10.0)
    print(f"{label:<14} NMSE {c['nmse_ss_db']:6.2f} dB (validation {v['nmse_ss_db']:6.2f})  "
          f"AC {c['ac_ss_db']:5.2f} dB  median iterations to -10 dB: {np.nanmedian(first):.0f}")
