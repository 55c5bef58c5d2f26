"""Reach a sinusoidal path from a start cluttered by square obstacles.

The planner grows a kinodynamic RRT until a state enters the goal band with
the heading aligned to the path; pure pursuit follows the plan, and the
supervisor switches to the local controller on entering the switch-in band.
The same run is repeated over a few seeds, with and without measurement noise
on the set-membership tests, to show that the jump count stays small.

    python3 demos/sinusoid_obstacles.py [n_seeds]
"""

import sys

from pathinv.planner import validate_plan
from pathinv.scenario import bundled
from pathinv.supervisor import run_algorithm1

n = int(sys.argv[1]) if len(sys.argv) > 1 else 5
base = bundled("sinusoid_obstacles")
nb = base.neighborhood
print(f"{len(base.obstacles)} obstacles, goal band {nb.c1 * nb.n_c:.3f} m, switch-in {nb.c10 * nb.n_c:.3f} m, switch-out {nb.c0 * nb.n_c:.3f} m\n")
print(" seed  noise  plan[s]  valid  jumps  switch[s]  settle after switch[s]")
for noise in (0.0, 0.3):
    for seed in range(n):
        sc = base.with_(seed=seed, noise=noise * (nb.c0 - nb.c10) * nb.n_c)
        tr = run_algorithm1(sc.initial, sc)
        s = tr.summary()
        p = tr.plans[0]
        ok = validate_plan(p, sc.initial[:4], sc.goal_set(), sc.obstacles, sc.car).ok
        print(f" {seed:4d}  {noise:5.1f}  {p.end_time:7.2f}  {str(ok):5s}  {s['jump_count']:5d}  {s['switch_time']:9.3f}  {s['settle_time'] - s['switch_time']:8.3f}")
