"""Start at the center of a unit circle and let the supervisor bring the car onto it.

The center is a singular point of the path coordinates (every circle point is
equally close), so the local controller cannot start there. Pure pursuit on a
planned trajectory takes the car into the switch-in band, the supervisor hands
over to the local controller once, and the transversal error then goes to zero
in finite time.

    python3 demos/circle_from_center.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from pathinv.cli import simulate_to
from pathinv.scenario import bundled

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/circle_from_center")
sc = bundled("circle_from_center")
s = simulate_to(sc, out)

print(f"scenario {sc.name}, horizon {sc.horizon} s, dt {sc.dt} s")
print(f"jumps: {s['jump_count']} at t = {[round(t, 3) for t in s['jump_times']]}")
print(f"switch to the local controller at t = {s['switch_time']:.3f} s")
print(f"||xi|| below 1e-4 from t = {s['T_star']:.3f} s (largest value afterwards {s['max_xi_after_Tstar']:.2e})")
print(f"distance to the circle below 1e-3 from t = {s['settle_time']:.3f} s, final {s['final_dist']:.1e}")

# a compact timeline of the distance and the mode
d = np.loadtxt(out / "dist.csv", delimiter=",", skiprows=1)
q = np.loadtxt(out / "q.csv", delimiter=",", skiprows=1)
print("\n   t [s]   q   distance")
for t in (0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0, 10.0, 20.0):
    k = min(np.searchsorted(d[:, 0], t), len(d) - 1)
    print(f"  {d[k, 0]:6.2f}   {int(q[k, 2])}   {d[k, 2]:.3e}")
print(f"\nartifacts in {out}/")
