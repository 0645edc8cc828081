"""
Reverberant ATFs
================

Image-source transfer functions for the same layout in an 8.1 x 7.3 x 2.9 m
room, compared with the free-field model, then a short adaptive run on them.
"""

import numpy as np

from soundzones.config import ExperimentConfig
from soundzones.experiment import run_monte_carlo
from soundzones.scene import freefield_atf, image_source_atf, reference_geometry, sabine_absorption

geom = reference_geometry()
print(f"wall absorption at T60 = 0.2 s: {sabine_absorption(geom.room_dims, 0.2):.3f}")

for order in (0, 1, 3, 6):
    H = image_source_atf(geom, 1000.0, t60=0.2, max_order=order)
    print(f"max order {order}: mean |h| {np.abs(H.entries).mean():.4f}, "
          f"cond(H) {np.linalg.cond(H.entries):.3g}")
H0 = freefield_atf(geom, 1000.0)
print(f"free field:  mean |h| {np.abs(H0.entries).mean():.4f}, cond(H) {np.linalg.cond(H0.entries):.3g}")

# same experiment as the learning-curve demo, shorter, on the reverberant model
config = ExperimentConfig(atf_backend="image_source", step_size="auto", iterations=2000,
                          monte_carlo_runs=3)
rs = run_monte_carlo(config, 1000.0)
for label in rs.labels:
    row = rs.steady(1000.0, label)
    print(f"{label:<14} NMSE {row['nmse_ss_db']:6.2f} dB  AC {row['ac_ss_db']:5.2f} dB")
