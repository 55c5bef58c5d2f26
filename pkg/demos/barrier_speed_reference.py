"""Speed reference that asks the car to stop and reverse, filtered by the barrier.

On the unit circle the tangential speed eta2 tracks the reference sin(t),
which crosses zero. Crossing zero would make the forward speed vrm + x5
vanish, where the transverse linearization is singular. The CBF row of the
QP keeps eta2 above delta = 0.02 and the CLF row is relaxed while it binds.

Speed tracking is not guaranteed. The CLF row differentiates V along the
eta dynamics with the reference held fixed, and its input coefficient
eta3 - eta3_ref vanishes while V can still be positive, so the relaxation
absorbs the row there. The run below shows a large tracking error. The
barrier guarantee does not depend on tracking.

    python3 demos/barrier_speed_reference.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from pathinv.cli import simulate_to
from pathinv.scenario import bundled

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/circle_barrier")
sc = bundled("circle_barrier")
s = simulate_to(sc, out)

e = np.loadtxt(out / "eta2.csv", delimiter=",", skiprows=1)
t, eta2, ref = e[:, 0], e[:, 2], e[:, 3]
print(f"min reference {ref.min():+.3f}, min eta2 {s['min_eta2']:.4f} (delta {sc.barrier.delta})")
print(f"CBF active on {s['cbf_active_samples']} of {s['samples']} samples, jumps {s['jump_count']}")

print("\n   t [s]   eta2_ref    eta2")
for tk in np.arange(sc.t0, sc.t0 + sc.horizon + 1e-9, 2.0):
    k = min(np.searchsorted(t, tk), len(t) - 1)
    print(f"  {t[k]:6.2f}   {ref[k]:+.4f}   {eta2[k]:+.4f}")
print(f"\nmean |eta2 - ref| over the run: {np.mean(np.abs(eta2 - ref)):.3f}")
