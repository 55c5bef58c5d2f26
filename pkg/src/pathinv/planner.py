"""Kinodynamic RRT that steers the car into the goal band around the path.

The tree grows by forward-integrating the kinematic car under a small set of
constant-input motion primitives. Every emitted :class:`MotionPlan` stores all
integration substeps, so consecutive states are RK4-consistent by
construction and can be re-checked independently by :func:`validate_plan`.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .curve import Curve, wrap_angle
from .errors import BudgetExhausted, EmptyPlan, NonUniqueProjection, NotInNeighborhood, StartInCollision
from .vehicle import CarParams, car_dynamics, rk4_step

log = logging.getLogger(__name__)

PLAN_COLUMNS = ("t", "x1", "x2", "x3", "x4", "v", "omega")
#: tolerance on RK4 consistency between consecutive plan states
DYNAMICS_TOL = 1e-6


# --- obstacles --------------------------------------------------------------------


@dataclass
class ObstacleSet:
    """Axis-aligned rectangles ``(xmin, ymin, xmax, ymax)`` and discs ``(cx, cy, r)``.

    ``inflation`` is the radius of the disc that over-approximates the car.
    """

    rects: list = field(default_factory=list)
    circles: list = field(default_factory=list)
    inflation: float = 0.25

    def __post_init__(self):
        self.rects = [tuple(float(v) for v in r) for r in self.rects]
        self.circles = [tuple(float(v) for v in c) for c in self.circles]
        for r in self.rects:
            if len(r) != 4 or not (r[2] > r[0] and r[3] > r[1]):
                raise ValueError(f"bad rectangle {r}")
        for c in self.circles:
            if len(c) != 3 or not c[2] > 0:
                raise ValueError(f"bad circle {c}")
        if self.inflation < 0:
            raise ValueError("inflation must be nonnegative")
        self._R = np.array(self.rects, dtype=float).reshape(-1, 4)
        self._C = np.array(self.circles, dtype=float).reshape(-1, 3)

    def __len__(self):
        return len(self.rects) + len(self.circles)

    def distance(self, points) -> np.ndarray:
        """Euclidean distance from each point to the nearest (uninflated) obstacle.

        Points inside an obstacle get distance 0. Returns ``inf`` when empty.
        """
        P = np.atleast_2d(np.asarray(points, dtype=float))
        d = np.full(len(P), np.inf)
        if len(self._R):
            R = self._R
            dx = np.maximum(np.maximum(R[None, :, 0] - P[:, None, 0], P[:, None, 0] - R[None, :, 2]), 0.0)
            dy = np.maximum(np.maximum(R[None, :, 1] - P[:, None, 1], P[:, None, 1] - R[None, :, 3]), 0.0)
            d = np.minimum(d, np.hypot(dx, dy).min(axis=1))
        if len(self._C):
            C = self._C
            dc = np.hypot(P[:, None, 0] - C[None, :, 0], P[:, None, 1] - C[None, :, 1]) - C[None, :, 2]
            d = np.minimum(d, np.maximum(dc, 0.0).min(axis=1))
        return d

    def clearance(self, points) -> np.ndarray:
        """Distance minus inflation; negative means collision."""
        return self.distance(points) - self.inflation

    def collides(self, points) -> bool:
        return bool(np.any(self.clearance(points) <= 0.0))


# --- goal -------------------------------------------------------------------------


@dataclass
class GoalSet:
    """States close to the path, heading along it, and moving fast enough.

    ``band`` is the positional radius (``c1 * n_c``); ``min_alignment`` bounds
    ``<grad pi / |grad pi|, (cos x3, sin x3)>`` from below; ``speed_min`` is
    the barrier margin ``delta`` that the plan speed must exceed.
    """

    curve: Curve
    band: float
    speed_min: float = 0.02
    min_alignment: float = 0.0
    #: radius of the supervisor's switch-in set; plans may only enter it with
    #: alignment above ``entry_alignment``
    entry_band: float | None = None
    entry_alignment: float = 0.0

    def alignment(self, state) -> float:
        g = self.curve.grad_pi((state[0], state[1]))
        n = math.hypot(g[0], g[1])
        return (g[0] * math.cos(state[2]) + g[1] * math.sin(state[2])) / n

    def margins(self, state, speed: float) -> dict:
        d = self.curve.distance((state[0], state[1]))
        try:
            align = self.alignment(state)
        except (NotInNeighborhood, NonUniqueProjection):
            align = -math.inf
        return {
            "distance": self.band - d,
            "heading": align - self.min_alignment,
            "speed": abs(speed) - self.speed_min,
        }

    def contains(self, state, speed: float) -> bool:
        return all(v > 0.0 if k != "distance" else v >= 0.0 for k, v in self.margins(state, speed).items())


# --- plans ------------------------------------------------------------------------


@dataclass
class MotionPlan:
    """Sampled state/input trajectory; ``inputs[k]`` is held on ``[t_k, t_{k+1})``.

    The last input row repeats the final primitive (or is the nominal input
    for a single-state plan) so that every row of the CSV is complete.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.states = np.asarray(self.states, dtype=float).reshape(-1, 4)
        self.inputs = np.asarray(self.inputs, dtype=float).reshape(-1, 2)
        if not (len(self.times) == len(self.states) == len(self.inputs)):
            raise ValueError("times, states and inputs must have the same length")
        if len(self.times) and np.any(np.diff(self.times) <= 0):
            raise ValueError("plan times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :2]

    @property
    def end_time(self) -> float:
        if not len(self):
            raise EmptyPlan("plan has no states")
        return float(self.times[-1])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(PLAN_COLUMNS)
            for t, x, u in zip(self.times, self.states, self.inputs):
                w.writerow([f"{v:.17g}" for v in (t, *x, *u)])

    @classmethod
    def from_csv(cls, path) -> "MotionPlan":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or tuple(rows[0]) != PLAN_COLUMNS:
            raise ValueError(f"plan CSV header must be {','.join(PLAN_COLUMNS)}")
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, 7)
        return cls(data[:, 0], data[:, 1:5], data[:, 5:7])


# --- planner ----------------------------------------------------------------------


@dataclass(frozen=True)
class PlannerConfig:
    """``bounds = (xmin, xmax, ymin, ymax)`` is the sampling box for positions."""

    bounds: tuple = (-5.0, 5.0, -5.0, 5.0)
    nominal_speed: float = 1.0
    omega_max: float = 2.0
    duration: float = 0.2
    resolution: float = 0.01
    goal_bias: float = 0.1
    heading_weight: float = 0.3
    budget: int = 5000
    allow_reverse: bool = False

    def __post_init__(self):
        b = self.bounds
        if len(b) != 4 or not (b[1] > b[0] and b[3] > b[2]):
            raise ValueError(f"bad bounds {b}")
        for name in ("nominal_speed", "omega_max", "duration", "resolution"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must lie in [0, 1]")
        if self.budget < 1:
            raise ValueError("budget must be at least 1")

    @property
    def substeps(self) -> int:
        """Substeps per primitive so that each moves at most ``resolution``."""
        return max(1, int(math.ceil(self.nominal_speed * self.duration / self.resolution)))

    def primitives(self) -> list:
        speeds = [self.nominal_speed] + ([-self.nominal_speed] if self.allow_reverse else [])
        return [(v, w) for v in speeds for w in (-self.omega_max, 0.0, self.omega_max)]


def _car_f(params):
    return lambda x, u: car_dynamics(x, u, params, check=False)


def _rollout(x0, u, dt, n, params):
    """RK4 under a constant input, unrolled on scalars (the planner's hot loop).

    Same stages as :func:`pathinv.vehicle.rk4_step` applied to
    :func:`pathinv.vehicle.car_dynamics`.
    """
    v, w = u
    c = v / params.length
    cos, sin, tan = math.cos, math.sin, math.tan
    xs = np.empty((n + 1, 4))
    a, b, th, ph = (float(z) for z in x0)
    xs[0] = (a, b, th, ph)
    h2, h6 = 0.5 * dt, dt / 6.0
    for k in range(n):
        # phi' = w is constant, so the phi stages are exact and shared
        p1, p2, p4 = ph, ph + h2 * w, ph + dt * w
        k1x, k1y, k1t = v * cos(th), v * sin(th), c * tan(p1)
        t2 = th + h2 * k1t
        k2x, k2y, k2t = v * cos(t2), v * sin(t2), c * tan(p2)
        t3 = th + h2 * k2t
        k3x, k3y, k3t = v * cos(t3), v * sin(t3), c * tan(p2)
        t4 = th + dt * k3t
        k4x, k4y, k4t = v * cos(t4), v * sin(t4), c * tan(p4)
        a += h6 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        b += h6 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        th += h6 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
        ph += h6 * (6.0 * w)
        xs[k + 1] = (a, b, th, ph)
    return xs


def _in_bounds(P, b):
    return bool(np.all((P[:, 0] >= b[0]) & (P[:, 0] <= b[1]) & (P[:, 1] >= b[2]) & (P[:, 1] <= b[3])))


class _GoalScan:
    """Goal test along a primitive, plus the switch-in entry rule.

    A substep inside ``goal.entry_band`` whose heading is not aligned makes
    the primitive unusable: the supervisor would hand over to the local
    controller at a state outside its basin.
    """

    def __init__(self, goal: GoalSet, speed: float):
        self.goal = goal
        self.speed = speed
        self.reach = max(goal.band, goal.entry_band or 0.0)

    def scan(self, states):
        """``(index of first goal substep or None, entry violated)``."""
        goal = self.goal
        P = states[:, :2]
        # cheap lower bounds on the distance rule out substeps far from the bands
        near = np.flatnonzero(goal.curve.distance_lower(P) <= self.reach)
        for i in near:
            d = goal.curve.distance(P[i])
            if d > self.reach:
                continue
            try:
                align = goal.alignment(states[i])
            except (NotInNeighborhood, NonUniqueProjection):
                align = -math.inf
            if goal.entry_band is not None and d <= goal.entry_band and not align > goal.entry_alignment:
                return None, True
            if d <= goal.band and align > goal.min_alignment and abs(self.speed) > goal.speed_min:
                return int(i), False
        return None, False


def plan(start, goal: GoalSet, obstacles: ObstacleSet, params: CarParams, seed: int = 0, config: PlannerConfig | None = None, budget: int | None = None) -> MotionPlan:
    """Grow an RRT from ``start`` until a substep lands in ``goal``.

    Deterministic for a given ``seed``. Raises :class:`StartInCollision` and
    :class:`BudgetExhausted`.
    """
    cfg = config or PlannerConfig()
    budget = cfg.budget if budget is None else int(budget)
    rng = np.random.default_rng(seed)
    x0 = np.array(start, dtype=float).reshape(4)
    if abs(x0[3]) > params.x4_max:
        raise ValueError(f"start steering |x4|={abs(x0[3]):.6g} exceeds x4_max")
    if obstacles.collides(x0[None, :2]):
        raise StartInCollision(f"start position {x0[:2]} is within {obstacles.inflation} of an obstacle")

    speed = cfg.nominal_speed
    scan = _GoalScan(goal, speed)
    if goal.contains(x0, speed):
        return MotionPlan([0.0], x0[None, :], [(speed, 0.0)])

    n_sub = cfg.substeps
    dt = cfg.duration / n_sub
    prims = cfg.primitives()
    b = cfg.bounds
    hw = cfg.heading_weight

    cap = min(budget, 200_000) + 1
    keys = np.empty((cap, 3))
    keys[0] = x0[:3]
    nodes = [x0]
    parent = [-1]
    edges = [None]  # (states (n+1, 4), input)
    lam_lo, lam_hi = goal.curve.lam_min, goal.curve.lam_max

    for it in range(budget):
        if rng.random() < cfg.goal_bias:
            lam = rng.uniform(lam_lo, lam_hi)
            p = np.asarray(goal.curve.sigma(lam), dtype=float)
            target = np.array([p[0], p[1], goal.curve.tangent_angle(lam)])
        else:
            target = np.array([rng.uniform(b[0], b[1]), rng.uniform(b[2], b[3]), rng.uniform(-math.pi, math.pi)])
        n = len(nodes)
        d = keys[:n] - target
        d[:, 2] = hw * wrap_angle(d[:, 2])
        i_near = int(np.argmin(np.einsum("ij,ij->i", d, d)))
        x_near = nodes[i_near]

        options = []
        for u in prims:
            xs = _rollout(x_near, u, dt, n_sub, params)
            if np.any(np.abs(xs[:, 3]) > params.x4_max):
                continue
            e = xs[-1, :3] - target
            e[2] = hw * _wrap(e[2])
            options.append((float(e @ e), u, xs))
        options.sort(key=lambda o: o[0])
        for _, u, xs in options:
            if not _in_bounds(xs[:, :2], b) or obstacles.collides(xs[1:, :2]):
                continue
            hit, bad_entry = scan.scan(xs[1:])
            if bad_entry:
                continue
            if hit is not None:
                xs = xs[: hit + 2]
            nodes.append(xs[-1].copy())
            keys[len(nodes) - 1] = xs[-1, :3]
            parent.append(i_near)
            edges.append((xs, u))
            if hit is not None:
                log.debug("goal reached after %d iterations (%d nodes)", it + 1, len(nodes))
                return _extract(nodes, parent, edges, dt)
            break
    raise BudgetExhausted(f"no plan within {budget} iterations ({len(nodes)} nodes)")


def _wrap(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _extract(nodes, parent, edges, dt) -> MotionPlan:
    chain = []
    i = len(nodes) - 1
    while parent[i] >= 0:
        chain.append(edges[i])
        i = parent[i]
    chain.reverse()
    states = [nodes[0][None, :]]
    inputs = []
    for xs, u in chain:
        states.append(xs[1:])
        inputs.extend([u] * (len(xs) - 1))
    inputs.append(inputs[-1])
    S = np.vstack(states)
    T = dt * np.arange(len(S))
    return MotionPlan(T, S, np.array(inputs, dtype=float))


# --- validation -------------------------------------------------------------------


class PlanItem(NamedTuple):
    name: str
    ok: bool
    #: worst-case margin; positive is good for every item
    margin: float
    detail: str = ""


class PlanReport(NamedTuple):
    items: tuple

    @property
    def ok(self) -> bool:
        return all(i.ok for i in self.items)

    def __getitem__(self, key):
        if isinstance(key, str):
            for i in self.items:
                if i.name == key:
                    return i
            raise KeyError(key)
        return self.items[key]


def validate_plan(plan_: MotionPlan, start, goal: GoalSet, obstacles: ObstacleSet, params: CarParams, start_tol: float = 1e-9, resolution: float = 0.01) -> PlanReport:
    """Re-check the four plan requirements independently of the planner.

    1. ``start``: first state equals the start state.
    2. ``goal``: final state lies in the goal set.
    3. ``dynamics``: every step is reproduced by RK4 under its recorded input
       within :data:`DYNAMICS_TOL` and the steering limit holds.
    4. ``collision``: positions interpolated at ``resolution`` stay clear.
    """
    if not len(plan_):
        raise EmptyPlan("plan has no states")
    S, U, T = plan_.states, plan_.inputs, plan_.times
    x0 = np.asarray(start, dtype=float).reshape(4)

    err0 = float(np.max(np.abs(S[0] - x0)))
    item1 = PlanItem("start", err0 <= start_tol, start_tol - err0, f"max |x'(0) - x0| = {err0:.3g}")

    m = goal.margins(S[-1], U[-1, 0])
    worst = min(m.values())
    ok2 = m["distance"] >= 0 and m["heading"] > 0 and m["speed"] > 0
    item2 = PlanItem("goal", ok2, worst, ", ".join(f"{k}={v:.3g}" for k, v in m.items()))

    f = _car_f(params)
    res = 0.0
    steer = float(np.max(np.abs(S[:, 3]))) if len(S) else 0.0
    for k in range(len(S) - 1):
        x1 = rk4_step(f, S[k], tuple(U[k]), T[k + 1] - T[k])
        res = max(res, float(np.max(np.abs(x1 - S[k + 1]))))
    ok3 = res <= DYNAMICS_TOL and steer <= params.x4_max + 1e-12
    margin3 = min(DYNAMICS_TOL - res, params.x4_max - steer)
    item3 = PlanItem("dynamics", ok3, margin3, f"max RK4 residual {res:.3g}, max |x4| {steer:.6g}")

    P = S[:, :2]
    if len(P) > 1:
        seg = np.hypot(*np.diff(P, axis=0).T)
        pts = [P[:1]]
        for k, L in enumerate(seg):
            n = max(1, int(math.ceil(L / resolution)))
            w = (np.arange(1, n + 1) / n)[:, None]
            pts.append(P[k] + w * (P[k + 1] - P[k]))
        P = np.vstack(pts)
    clear = float(np.min(obstacles.clearance(P))) if len(obstacles) else math.inf
    item4 = PlanItem("collision", clear > 0.0, clear, f"min clearance {clear:.3g} over {len(P)} points")

    return PlanReport((item1, item2, item3, item4))
