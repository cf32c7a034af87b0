"""
One drift trajectory, exact and averaged
========================================

The exact system oscillates with the tide period eps and needs thousands of
right-hand-side evaluations; the averaged system is smooth and needs a few
hundred.  The oscillations are put back by reconstruction.
"""

import numpy as np

from driftavg import FieldBundle, integrate_averaged, integrate_direct, reconstruct
from driftavg.mc import sup_errors
from driftavg.wind import SmallScaleParams, SynopticParams, required_span, synthesize

eps, p = 1 / 50, 1 / 100
fields = FieldBundle.analytic()

# a calm sea first: no wind at all
calm = synthesize(SynopticParams(mean=(0, 0), std=(0, 0)), SmallScaleParams(sigma=0.0), eps,
                  required_span(eps, p), seed=0)
direct = integrate_direct(fields, calm, eps, x0=(1, 1), v0=(0, 0))
avg = integrate_averaged(fields, calm, eps, p, x0=(1, 1), v0=(0, 0))
print("calm sea, sup errors (speed o0, speed o1, position o0, position o1):")
print("  ", np.round(sup_errors(direct, avg, fields, calm, eps), 5))
print("   rhs evaluations: direct", direct.meta["nfev"], " averaged", avg.meta["nfev"])

# now with a synthetic wind
wind = synthesize(SynopticParams(), SmallScaleParams(), eps, required_span(eps, p), seed=7)
direct = integrate_direct(fields, wind, eps, x0=(1, 1), v0=(0, 0))
avg = integrate_averaged(fields, wind, eps, p, x0=(1, 1), v0=(0, 0))
print("windy sea:")
print("  ", np.round(sup_errors(direct, avg, fields, wind, eps), 5))

# positions at a few times: exact, order 0, order 1
t = np.array([0.25, 0.5, 0.75, 1.0])
x0, _ = reconstruct(t, avg, fields, wind, eps, order=0)
x1, _ = reconstruct(t, avg, fields, wind, eps, order=1)
for ti, xe, a, b in zip(t, direct.position(t), x0, x1):
    print(f"  t={ti:.2f}  exact {xe.round(4)}  order0 {a.round(4)}  order1 {b.round(4)}")
