"""Hysteresis supervisor uniting pure pursuit (``q = 1``) and the local controller (``q = 0``).

Sets, written in terms of the positional distance ``d`` to the path::

    U0  = {d <  c0 n_c}       T10 = {d <= c10 n_c}
    C_0 = {d <= c0 n_c}       D_0 = {d >= c0 n_c}
    C_1 = {d >= c10 n_c}      D_1 = {d <= c10 n_c}

Jumps toggle ``q`` and have priority over flows. The controller is evaluated
once per integration step and held (zero-order hold). When a step ends inside
the current jump set, the crossing is localized by bisection on the step
length with the same held input, and the trace is cut at the crossing.

While ``q = 1`` pure pursuit produces ``(v, omega)`` for the kinematic car;
the extended plant is driven with ``u2 = omega`` and a critically damped
speed servo ``u1 = -wn^2 (x5 - (v - vrm)) - 2 wn x6``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from .curve import Curve, Neighborhood
from .errors import HeadingViolation, NonFiniteState, NotInFlowOrJumpSet, PathInvError
from .global_ctrl import PurePursuit
from .planner import MotionPlan, plan
from .tfl import lie_derivatives, to_transverse
from .vehicle import AuxInput, CarInput, CarParams, clamp_steering, extended_dynamics, rk4_step

if TYPE_CHECKING:
    from .scenario import Scenario

log = logging.getLogger(__name__)

TRACE_COLUMNS = (
    "t", "j", "q",
    "x1", "x2", "x3", "x4", "x5", "x6",
    "u1", "u2", "dist",
    "eta1", "eta2", "eta3", "eta2_ref",
    "xi1", "xi2", "xi3",
    "cbf_active", "clf_active",
)  # fmt: skip

#: ``||xi||`` threshold that defines convergence in the summary
XI_TOL = 1e-4
#: post-switch distance threshold for the settling time
DIST_TOL = 1e-3
MAX_JUMPS = 50


class HybridState(NamedTuple):
    xbar: np.ndarray
    q: int
    t: float
    j: int


@dataclass(frozen=True)
class SupervisorSets:
    nbhd: Neighborhood

    @property
    def r_out(self) -> float:
        """Switch-out radius ``c0 n_c`` (boundary of ``U0``)."""
        return self.nbhd.c0 * self.nbhd.n_c

    @property
    def r_in(self) -> float:
        """Switch-in radius ``c10 n_c`` (``T10``)."""
        return self.nbhd.c10 * self.nbhd.n_c

    def in_U0(self, d: float) -> bool:
        return d < self.r_out

    def in_T10(self, d: float) -> bool:
        return d <= self.r_in

    def in_flow(self, q: int, d: float) -> bool:
        return d <= self.r_out if q == 0 else d >= self.r_in

    def in_jump(self, q: int, d: float) -> bool:
        return d >= self.r_out if q == 0 else d <= self.r_in


def distance_to_gamma(xbar, curve: Curve) -> float:
    """Distance from the lifted path: only the position is constrained by the lift."""
    return curve.distance((xbar[0], xbar[1]))


def jump_map(q: int) -> int:
    if q not in (0, 1):
        raise ValueError(f"q must be 0 or 1, got {q!r}")
    return 1 - q


def speed_servo(xbar, inp: CarInput, params: CarParams, wn: float) -> AuxInput:
    """Map a kinematic-car input onto the extended plant."""
    u1 = -wn * wn * (xbar[4] - (inp.v - params.vrm)) - 2.0 * wn * xbar[5]
    return AuxInput(u1, inp.omega)


# --- trace ------------------------------------------------------------------------


@dataclass
class HybridTrace:
    """Column store of a hybrid run; one row per sample, jumps repeat ``t``."""

    rows: list = field(default_factory=list)
    #: ``(t, j_after, q_before, q_after, dist)`` per jump
    jumps: list = field(default_factory=list)
    plans: list = field(default_factory=list)
    vrm: float = 1.0
    delta: float = 0.02

    _cols: dict | None = None

    def append(self, row: tuple) -> None:
        self.rows.append(row)
        self._cols = None

    def pop(self) -> tuple:
        self._cols = None
        return self.rows.pop()

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        if self._cols is None:
            A = np.array(self.rows, dtype=float).reshape(-1, len(TRACE_COLUMNS))
            self._cols = {c: A[:, i] for i, c in enumerate(TRACE_COLUMNS)}
        return self._cols[name]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.column(name)

    @property
    def states(self) -> np.ndarray:
        return np.stack([self.column(f"x{i}") for i in range(1, 7)], axis=1)

    @property
    def xi_norm(self) -> np.ndarray:
        return np.sqrt(self["xi1"] ** 2 + self["xi2"] ** 2 + self["xi3"] ** 2)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for r in self.rows:
                w.writerow([_fmt(v) for v in r])

    @classmethod
    def from_csv(cls, path, vrm: float = 1.0, delta: float = 0.02) -> "HybridTrace":
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            header = tuple(next(rd))
            if header != TRACE_COLUMNS:
                raise ValueError("unexpected trace CSV header")
            rows = [tuple(float(v) for v in r) for r in rd]
        tr = cls(rows=rows, vrm=vrm, delta=delta)
        j, q, t, d = tr["j"], tr["q"], tr["t"], tr["dist"]
        for k in np.flatnonzero(np.diff(j) > 0) + 1:
            tr.jumps.append((float(t[k]), int(j[k]), int(q[k - 1]), int(q[k]), float(d[k])))
        return tr

    def summary(self) -> dict:
        return summarize(self)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def summarize(trace: HybridTrace, xi_tol: float = XI_TOL, dist_tol: float = DIST_TOL) -> dict:
    """Run metrics computed purely from trace columns (so they re-derive from CSV)."""
    t, j, q = trace["t"], trace["j"], trace["q"]
    dist, eta2 = trace["dist"], trace["eta2"]
    xin = trace.xi_norm
    n = len(t)
    jk = np.flatnonzero(np.diff(j) > 0) + 1
    jump_times = [float(t[k]) for k in jk]
    to0 = [int(k) for k in jk if q[k] == 0]

    # first index of the final q = 0 stretch
    if n and q[-1] == 0:
        nz = np.flatnonzero(q != 0)
        k0 = int(nz[-1]) + 1 if len(nz) else 0
    else:
        k0 = n
    switch_time = float(t[k0]) if k0 < n else None

    def settle(mask_ok):
        # first index in [k0, n) from which mask_ok holds until the end
        if k0 >= n:
            return None
        bad = np.flatnonzero(~mask_ok[k0:])
        k = k0 + (int(bad[-1]) + 1 if len(bad) else 0)
        return k if k < n else None

    small = np.nan_to_num(xin, nan=np.inf) < xi_tol
    k_settle = settle(small)
    k_d = settle(dist < dist_tol)
    # first entry below the threshold in the final local stretch
    hit = np.flatnonzero(small[k0:]) if k0 < n else []
    k_xi = k0 + int(hit[0]) if len(hit) else None
    T_star = float(t[k_xi]) if k_xi is not None else None
    max_xi_after = float(np.max(xin[k_xi:])) if k_xi is not None else None

    q0 = q == 0
    e2 = eta2[q0 & np.isfinite(eta2)]
    min_eta2 = float(np.min(e2)) if len(e2) else None
    speed = np.abs(trace.vrm + trace["x5"])
    return {
        "samples": int(n),
        "jump_count": int(j[-1]) if n else 0,
        "jump_times": jump_times,
        "jumps_to_local": len(to0),
        "initial_mode": int(q[0]) if n else None,
        "final_mode": int(q[-1]) if n else None,
        "reached_local": bool(n and q[-1] == 0),
        "switch_time": switch_time,
        "T_star": T_star,
        "max_xi_after_Tstar": max_xi_after,
        "xi_settle_time": float(t[k_settle]) if k_settle is not None else None,
        "settle_time": float(t[k_d]) if k_d is not None else None,
        "min_eta2": min_eta2,
        "max_barrier_violation": max(0.0, trace.delta - min_eta2) if min_eta2 is not None else 0.0,
        "min_speed": float(np.min(speed)) if n else None,
        "max_dist_local": float(np.max(dist[q0])) if np.any(q0) else None,
        "final_dist": float(dist[-1]) if n else None,
        "cbf_active_samples": int(np.sum(trace["cbf_active"] > 0)),
    }


# --- simulation -------------------------------------------------------------------


class _Flow:
    """Per-run mutable context: current plan follower and noise source."""

    def __init__(self, sc: "Scenario"):
        self.sc = sc
        self.sets = SupervisorSets(sc.neighborhood)
        self.local = sc.local_controller()
        self.goal = sc.goal_set()
        self.rng = np.random.default_rng(sc.seed)
        self.plan_seed = int(sc.seed)
        self.pursuit: PurePursuit | None = None
        self.n_plans = 0
        #: noise sample of a localized crossing, reused by the next membership test
        self.pending_noise = None

    def noise(self) -> np.ndarray:
        """Position measurement noise, uniform on the disc of radius ``sc.noise``."""
        if self.pending_noise is not None:
            w, self.pending_noise = self.pending_noise, None
            return w
        a = self.sc.noise
        if a <= 0:
            return np.zeros(2)
        r = a * math.sqrt(self.rng.random())
        th = self.rng.uniform(-math.pi, math.pi)
        return np.array([r * math.cos(th), r * math.sin(th)])

    def measured(self, x, w) -> float:
        return self.sc.curve.distance((x[0] + w[0], x[1] + w[1]))

    def replan(self, x, trace: HybridTrace) -> MotionPlan:
        sc = self.sc
        start = np.array(x[:4], dtype=float)
        p = plan(start, self.goal, sc.obstacles, sc.car, seed=self.plan_seed + self.n_plans, config=sc.planner)
        self.n_plans += 1
        self.pursuit = PurePursuit(p, sc.pursuit, sc.car)
        trace.plans.append(p)
        log.info("new motion plan: %d samples, T=%.3f s", len(p), p.end_time)
        return p


def output(q: int, xbar, t: float, ctx: _Flow):
    """Applied auxiliary input and diagnostics for mode ``q``.

    Returns ``(AuxInput, eta, xi, (cbf, clf), dist)`` where ``eta``/``xi``
    may be NaN when ``q = 1`` and the state is outside the tube.
    """
    sc = ctx.sc
    if q == 0:
        o = ctx.local(t, xbar)
        act = ("cbf" in o.qp.active, "clf" in o.qp.active)
        if not o.qp.feasible:
            raise PathInvError(f"QP reported infeasible at t={t:.6g}")
        return o.u, o.coords.eta, o.coords.xi, act, o.dist
    if ctx.pursuit is None:
        raise PathInvError("q = 1 without a motion plan")
    u = speed_servo(xbar, ctx.pursuit(xbar), sc.car, sc.servo_wn)
    eta = xi = (math.nan,) * 3
    d = distance_to_gamma(xbar, sc.curve)
    if d < sc.neighborhood.delta_y:
        try:
            c = to_transverse(xbar, sc.curve, sc.car)
            eta, xi = c.eta, c.xi
        except PathInvError:
            pass
    return u, eta, xi, (False, False), d


def _row(t, j, q, x, u, d, eta, xi, ref, act):
    return (t, j, q, *(float(v) for v in x), float(u[0]), float(u[1]), d, *eta, ref, *xi, int(act[0]), int(act[1]))


def initial_mode(xbar, sc: "Scenario") -> int:
    """``q = 0`` iff the state is in ``T10`` and satisfies the local controller's conditions."""
    if sc.q0 is not None:
        return int(sc.q0)
    sets = SupervisorSets(sc.neighborhood)
    if not sets.in_T10(distance_to_gamma(xbar, sc.curve)):
        return 1
    try:
        lie = lie_derivatives(xbar, sc.curve, sc.car, sc.neighborhood.delta_y)
    except PathInvError:
        return 1
    ok = lie.heading_alignment > 0 and sc.car.vrm + xbar[4] > sc.barrier.delta
    return 0 if ok else 1


def _check_switch_in(x, sc: "Scenario", t: float) -> None:
    lie = lie_derivatives(x, sc.curve, sc.car, sc.neighborhood.delta_y)
    if not lie.heading_alignment > 0:
        raise HeadingViolation(f"heading condition fails at the switch to the local controller (t={t:.6g})")


def step_hybrid(state: HybridState, ctx: _Flow, dt: float, trace: HybridTrace | None = None):
    """One jump or one flow step. Returns ``(new state, event)``.

    ``event`` is ``"jump"``, ``"flow"`` or ``"cross"`` (flow step cut at a
    set boundary; a jump follows on the next call).
    """
    sc = ctx.sc
    x, q, t, j = state
    w = ctx.noise()
    dm = ctx.measured(x, w)
    if ctx.sets.in_jump(q, dm):
        q_new = jump_map(q)
        if q_new == 0:
            _check_switch_in(x, sc, t)
        else:
            ctx.replan(x, trace if trace is not None else HybridTrace())
        if trace is not None:
            trace.jumps.append((t, j + 1, q, q_new, distance_to_gamma(x, sc.curve)))
        log.info("jump %d at t=%.6f: q %d -> %d (d=%.4g)", j + 1, t, q, q_new, dm)
        return HybridState(x, q_new, t, j + 1), "jump"
    if not ctx.sets.in_flow(q, dm):
        raise NotInFlowOrJumpSet(f"(q={q}, d={dm:.6g}) in neither the flow nor the jump set")

    u, eta, xi, act, d = output(q, x, t, ctx)
    if trace is not None:
        ref = sc.reference(t)[0]
        trace.append(_row(t, j, q, x, u, d, eta, xi, ref, act))
    f = lambda z, uu: extended_dynamics(z, uu, sc.car, check=False)

    def advance(h):
        z = rk4_step(f, x, u, h)
        if not np.all(np.isfinite(z)):
            raise NonFiniteState(f"non-finite state at t={t + h:.6g}")
        clamp_steering(z, sc.car)
        return z

    x_new = advance(dt)
    w_new = ctx.noise()
    ctx.pending_noise = w_new
    if not ctx.sets.in_jump(q, ctx.measured(x_new, w_new)):
        return HybridState(x_new, q, t + dt, j), "flow"
    # localize the crossing with the same noise sample
    lo, hi, x_hi = 0.0, dt, x_new
    while hi - lo > sc.event_tol:
        mid = 0.5 * (lo + hi)
        z = advance(mid)
        if ctx.sets.in_jump(q, ctx.measured(z, w_new)):
            hi, x_hi = mid, z
        else:
            lo = mid
    return HybridState(x_hi, q, t + hi, j), "cross"


def run_algorithm1(xbar0, sc: "Scenario", horizon: float | None = None, dt: float | None = None) -> HybridTrace:
    """Simulate the closed loop from ``xbar0`` until the horizon."""
    horizon = sc.horizon if horizon is None else float(horizon)
    dt = sc.dt if dt is None else float(dt)
    if not dt > 0:
        raise ValueError("dt must be positive")
    ctx = _Flow(sc)
    trace = HybridTrace(vrm=sc.car.vrm, delta=sc.barrier.delta)
    x = np.array(xbar0, dtype=float).reshape(6)
    if abs(x[3]) > sc.car.x4_max + 1e-12:
        raise ValueError("initial steering exceeds x4_max")
    q = initial_mode(x, sc)
    t0 = sc.t0
    if q == 1:
        ctx.replan(x, trace)
    state = HybridState(x, q, t0, 0)
    t_end = t0 + horizon
    while state.t < t_end - 1e-12:
        h = min(dt, t_end - state.t)
        state, ev = step_hybrid(state, ctx, h, trace)
        if state.j > MAX_JUMPS:
            raise PathInvError(f"more than {MAX_JUMPS} jumps; aborting")
    # final sample (a jump may still be due there; the sample records the pre-jump mode)
    x, q, t, j = state
    u, eta, xi, act, d = output(q, x, t, ctx) if ctx.sets.in_flow(q, ctx.measured(x, np.zeros(2))) else (AuxInput(math.nan, math.nan), (math.nan,) * 3, (math.nan,) * 3, (False, False), distance_to_gamma(x, sc.curve))
    trace.append(_row(t, j, q, x, u, d, eta, xi, sc.reference(t)[0], act))
    return trace


def run_local(xbar0, sc: "Scenario", horizon: float | None = None, dt: float | None = None) -> HybridTrace:
    """Flow the local controller alone (``q = 0`` throughout, no sets, no jumps).

    Leaving the tube ``delta_y`` or losing the heading condition raises, since
    the local controller is undefined there.
    """
    horizon = sc.horizon if horizon is None else float(horizon)
    dt = sc.dt if dt is None else float(dt)
    local = sc.local_controller()
    trace = HybridTrace(vrm=sc.car.vrm, delta=sc.barrier.delta)
    f = lambda z, uu: extended_dynamics(z, uu, sc.car, check=False)
    x = np.array(xbar0, dtype=float).reshape(6)
    n = int(round(horizon / dt))
    for k in range(n + 1):
        t = sc.t0 + k * dt
        o = local(t, x)
        if not o.qp.feasible:
            raise PathInvError(f"QP reported infeasible at t={t:.6g}")
        act = ("cbf" in o.qp.active, "clf" in o.qp.active)
        trace.append(_row(t, 0, 0, x, o.u, o.dist, o.coords.eta, o.coords.xi, sc.reference(t)[0], act))
        if k == n:
            break
        x = rk4_step(f, x, o.u, dt)
        if not np.all(np.isfinite(x)):
            raise NonFiniteState(f"non-finite state at t={t + dt:.6g}")
        clamp_steering(x, sc.car)
    return trace

