"""
Synthetic wind
==============

A synoptic surrogate (6-hour steps, veering anomalies) plus a small-scale
AR(1) component holding about 10% of the spread.  The averaged system only
sees the windowed mean and the cumulated fluctuation over each tide cycle.
"""

import numpy as np

from driftavg.wind import SmallScaleParams, SynopticParams, required_span, synthesize

eps, p = 1 / 50, 1 / 100
wind = synthesize(SynopticParams(), SmallScaleParams(), eps, required_span(eps, p), seed=3)
print("span", wind.span, " dt1", round(wind.dt1, 5), " dt2", wind.dt2)

t = wind.sample_grid()
w = wind.wind_at(t)
small = wind.small(t)
print("mean wind", w.mean(axis=0).round(3), " std", w.std(axis=0).round(3))
print("small-scale share of the spread",
      round(float(np.sqrt(small.var(axis=0).mean() / w.var(axis=0).mean())), 3))

# windowed means smooth the small scale away
tq = np.linspace(0.1, 0.9, 5)
print("W(t)      ", wind.wind_at(tq).round(3).tolist())
print("<W>_p(t)  ", wind.windowed_mean(tq, p).round(3).tolist())

# cumulated fluctuation over the current tide cycle
mom = wind.oscillation_moments(tq, eps, p)
print("J_W       ", mom.J_W.round(5).tolist())
print("I_W - J_W ", float(np.abs(mom.I_W - mom.J_W).max()))
