"""
Probability of running aground
==============================

The object starts at the centre of a circular coast of radius 0.3.  For
each synthetic wind member the averaged system is integrated, the
oscillating trajectory rebuilt, and the first exit from the disk located.
The wind rose and the grounding-angle histogram are reported side by side.
"""

import numpy as np

from driftavg import CoastGeometry, EnsembleConfig, run_ensemble

config = EnsembleConfig(n_members=300, master_seed=2024)
report = run_ensemble(config)
print(report.to_text())

rose = report.rose
share = rose.proportions.sum(axis=1)
print("wind blowing from (share of samples):")
for lab, s in zip(rose.labels, share):
    print(f"  {lab:>4} {'#' * int(round(100 * s))}")
print("dominant wind sector     ", rose.labels[int(np.argmax(share))])
print("dominant grounding sector", report.angle_labels[int(np.argmax(report.angle_counts))])

# a bigger coast is harder to reach
for radius in (0.25, 0.3, 0.35):
    r = run_ensemble(EnsembleConfig(n_members=100, master_seed=2024,
                                    coast=CoastGeometry(radius=radius)))
    print(f"radius {radius:.2f}: probability {r.probability:.2f} +/- {r.std_error:.2f}")
