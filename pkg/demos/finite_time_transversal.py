"""The local controller alone: finite-time convergence of the transversal state.

From a few offsets off the unit circle, the transversal coordinates xi go to
zero while the tangential speed tracks a constant reference. With the
fractional exponents the decay is faster than exponential near the origin:
the last decade of ||xi|| takes less time than the first.

    python3 demos/finite_time_transversal.py
"""

import math

import numpy as np

from pathinv.curve import Circle, Neighborhood
from pathinv.scenario import Scenario, bundled
from pathinv.supervisor import run_local

base = bundled("circle_from_center")
sc = Scenario(curve=Circle(1.0), initial=np.zeros(6), neighborhood=Neighborhood(0.2), gains=base.gains, barrier=base.barrier, horizon=8.0)
g = sc.gains
print(f"gains k = ({g.k1}, {g.k2}, {g.k3}), beta = {g.beta}, exponents {tuple(round(a, 4) for a in g.exponents)}\n")
print(" offset  heading err   t(||xi||<1e-2)  t(<1e-4)  t(<1e-8)   max dist")
for off, dth in ((0.05, 0.0), (0.1, 0.0), (-0.1, 0.0), (0.05, 0.3), (-0.08, -0.4)):
    r = 1.0 + off
    x = np.array([r, 0.0, math.pi / 2 + dth, math.atan(0.25), 0.0, 0.0])
    tr = run_local(x, sc)
    n, t = tr.xi_norm, tr["t"]

    def first(th):
        k = np.flatnonzero(n < th)
        return t[k[0]] if len(k) else math.nan

    print(f" {off:+.2f}   {dth:+.2f}          {first(1e-2):8.2f}     {first(1e-4):6.2f}    {first(1e-8):6.2f}   {np.max(tr['dist']):.3f}")
