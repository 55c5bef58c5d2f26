"""The ten acceptance criteria, one test each, at their stated tolerances.

Each test records a pass/fail line that the terminal summary prints.
"""

import math
import time

import numpy as np
import pytest

from oracles import arc_endpoint, circle_decoupling, circle_det, qp_grid
from pathinv.curve import Circle, Neighborhood, sinusoid
from pathinv.local_ctrl import BarrierConfig, qp_filter
from pathinv.planner import plan, validate_plan
from pathinv.scenario import Scenario, bundled
from pathinv.supervisor import run_algorithm1, run_local
from pathinv.tfl import decoupling_matrix, from_transverse_on_path, lie_derivatives, to_transverse, unextended_decoupling
from pathinv.vehicle import CarParams, car_dynamics, integrate

CAR = CarParams(0.25, math.pi / 4, 1.0)
CIRCLE = Circle(1.0)
N_SEEDS = 100


def circle_states(n, seed):
    """Random states in the tube, away from the vrm + x5 = 0 singularity."""
    rng = np.random.default_rng(seed)
    th = rng.uniform(-math.pi, math.pi, n)
    r = 1.0 + rng.uniform(-0.19, 0.19, n)
    X = np.column_stack([r * np.cos(th), r * np.sin(th), rng.uniform(-math.pi, math.pi, n), rng.uniform(-0.75, 0.75, n), rng.uniform(-0.95, 1.5, n), rng.uniform(-2, 2, n)])
    return X


def test_c1_closed_form_decoupling(record):
    t0 = time.perf_counter()
    worst = 0.0
    for x in circle_states(1000, 10):
        dm = decoupling_matrix(x, CIRCLE, CAR)
        ref = circle_decoupling(x, CAR.length, CAR.vrm)
        worst = max(worst, float(np.max(np.abs(dm.matrix - ref) / np.maximum(np.abs(ref), 1e-300))))
        worst = max(worst, abs(dm.det - circle_det(x, CAR.length, CAR.vrm)) / abs(circle_det(x, CAR.length, CAR.vrm)))
    dt = time.perf_counter() - t0
    ok = worst < 1e-8 and dt < 5.0
    record(1, ok, f"max relative error {worst:.2e} (< 1e-8), {dt:.2f} s (< 5 s)")
    assert ok


def test_c2_relative_degree(record):
    worst = fd_worst = 0.0
    h = 1e-6
    for x in circle_states(1000, 10):
        lie = lie_derivatives(x, CIRCLE, CAR)
        for lg in (lie.lg_pi, lie.lg_alpha):
            worst = max(worst, max(abs(lg[j][k]) for j in (0, 1) for k in (0, 1)))
        # second route: g1 = d/dx6, g2 = d/dx4, so central differences of pi, L_f pi, alpha, L_f alpha
        for i in (3, 5):
            e = np.zeros(6)
            e[i] = h
            lp, lm = lie_derivatives(x + e, CIRCLE, CAR), lie_derivatives(x - e, CIRCLE, CAR)
            for k in (0, 1):
                fd_worst = max(fd_worst, abs(lp.pi[k] - lm.pi[k]) / (2 * h), abs(lp.alpha[k] - lm.alpha[k]) / (2 * h))
    # unextended car: the steering-rate column never reaches second derivatives
    singular = True
    for x in circle_states(1000, 11):
        M = unextended_decoupling(x[:4], CIRCLE.grad_pi(x[:2]), CIRCLE.grad_s(x[:2]))
        singular &= M[1, 0] == 0.0 and M[1, 1] == 0.0 and M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0] == 0.0
        # the steering rate never enters the position velocity, so its column of d/dt (pi, alpha) is zero
        g = (CIRCLE.grad_pi(x[:2]), CIRCLE.grad_s(x[:2]))
        f0, f1 = car_dynamics(x[:4], (1.3, 0.0), CAR, check=False), car_dynamics(x[:4], (1.3, 1.0), CAR, check=False)
        singular &= all(gr[0] * (f1[0] - f0[0]) + gr[1] * (f1[1] - f0[1]) == 0.0 for gr in g)
    ok = worst < 1e-10 and fd_worst < 1e-10 and singular
    record(2, ok, f"max |L_g L_f^k| for k<2: {worst:.1e} analytic, {fd_worst:.1e} by differences (< 1e-10); unextended matrix singular exactly: {singular}")
    assert ok


def test_c3_round_trip(record):
    rng = np.random.default_rng(3)
    delta = BarrierConfig().delta
    worst = {}
    for name, curve in (("circle", CIRCLE), ("sinusoid", sinusoid(1.0, 1.0, window=(-10.0, 10.0)))):
        w = 0.0
        for _ in range(1000):
            lam = rng.uniform(curve.lam_min + 1, curve.lam_max - 1) if not curve.closed else rng.uniform(0, curve.length)
            eta = np.array([lam, rng.uniform(delta + 1e-3, 2.0), rng.uniform(-2.0, 2.0)])
            x = from_transverse_on_path(eta, curve, CAR)
            c = to_transverse(x, curve, CAR)
            w = max(w, float(np.linalg.norm(np.concatenate([c.eta - eta, c.xi]))))
        worst[name] = w
    ok = max(worst.values()) < 1e-7
    record(3, ok, "max round-trip error " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " (< 1e-7)")
    assert ok


def test_c4_finite_time_invariance(record):
    base = bundled("circle_from_center")
    sc = Scenario(curve=CIRCLE, initial=np.zeros(6), neighborhood=Neighborhood(0.2), gains=base.gains, barrier=base.barrier, horizon=20.0, dt=0.01)
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    T_worst, xi_worst, bad = 0.0, 0.0, 0
    for _ in range(50):
        lam = rng.uniform(0, 2 * math.pi)
        r = 1.0 + rng.uniform(-0.1, 0.1)
        heading = lam + math.pi / 2 + rng.uniform(-0.5, 0.5)  # aligned within 0.5 rad
        x = np.array([r * math.cos(lam), r * math.sin(lam), heading, math.atan(0.25) + rng.uniform(-0.2, 0.2), rng.uniform(-0.4, 0.4), rng.uniform(-0.3, 0.3)])
        assert lie_derivatives(x, CIRCLE, CAR).heading_alignment > 0 and CAR.vrm + x[4] > sc.barrier.delta
        tr = run_local(x, sc)
        s = tr.summary()
        if s["T_star"] is None or s["max_xi_after_Tstar"] >= 2e-4:
            bad += 1
            continue
        T_worst = max(T_worst, s["T_star"])
        xi_worst = max(xi_worst, s["max_xi_after_Tstar"])
    dt = time.perf_counter() - t0
    ok = bad == 0 and T_worst < 20.0 and dt < 60.0
    record(4, ok, f"50 runs: {bad} failures, worst T* {T_worst:.2f} s (< 20 s), max ||xi|| after T* {xi_worst:.2e} (< 2e-4), {dt:.1f} s (< 60 s)")
    assert ok


def test_c5_barrier(record):
    sc = bundled("circle_barrier")
    tr = run_algorithm1(sc.initial, sc, horizon=20.0)
    s = tr.summary()
    # any infeasible QP would have raised inside the run
    ok = s["min_eta2"] >= 0.02 - 1e-6 and s["jump_count"] == 0 and s["samples"] == 20001
    record(5, ok, f"min eta2 {s['min_eta2']:.4f} (>= 0.02 - 1e-6), CBF active on {s['cbf_active_samples']} samples, 0 QP infeasibilities")
    assert ok


def test_c6_qp_oracle(record):
    rng = np.random.default_rng(6)
    dv = dobj = 0.0
    for _ in range(1000):
        cfg = BarrierConfig(penalty=rng.uniform(1, 500), clf_gain=rng.uniform(0.1, 3), lambda0=rng.uniform(0.1, 3), lambda_k=rng.uniform(0.1, 3))
        eta = (0.0, rng.uniform(-0.5, 2.0), rng.uniform(-3, 3))
        ref = (rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5))
        res = qp_filter(eta, ref, cfg)
        v, d, J = qp_grid(res.clf_a, res.clf_b, res.v_min, cfg.penalty)
        dv = max(dv, abs(v - res.v_par), abs(d - res.slack))
        dobj = max(dobj, abs(J - res.objective))
    ok = dv < 1e-4 and dobj < 1e-6
    record(6, ok, f"1000 instances: max variable gap {dv:.1e} (< 1e-4), objective gap {dobj:.1e} (< 1e-6)")
    assert ok


_SWEEPS = {}


def sweep(name, noise_frac):
    key = (name, noise_frac)
    if key not in _SWEEPS:
        base = bundled(name)
        nb = base.neighborhood
        out = []
        for seed in range(N_SEEDS):
            sc = base.with_(seed=seed, noise=noise_frac * (nb.c0 - nb.c10) * nb.n_c)
            try:
                tr = run_algorithm1(sc.initial, sc)
                out.append((sc, tr, tr.summary(), None))
            except Exception as exc:  # recorded as a failed run
                out.append((sc, None, None, f"{type(exc).__name__}: {exc}"))
        _SWEEPS[key] = out
    return _SWEEPS[key]


def _jump_stats(runs):
    errors = [e for *_, e in runs if e]
    S = [s for _, _, s, e in runs if not e]
    max_j = max(s["jump_count"] for s in S) if S else None
    reached = all(s["reached_local"] for s in S)
    settle = [s["settle_time"] - s["switch_time"] if s["settle_time"] is not None and s["switch_time"] is not None else math.inf for s in S]
    return errors, max_j, reached, max(settle) if settle else math.inf


def test_c7_jump_bound(record):
    lines, ok = [], True
    for name in ("sinusoid_obstacles", "circle_from_center"):
        errors, max_j, reached, settle = _jump_stats(sweep(name, 0.0))
        good = not errors and max_j <= 2 and reached and settle <= 5.0
        ok &= good
        lines.append(f"{name}: {N_SEEDS} runs, {len(errors)} errors, max jumps {max_j}, all reach q=0 {reached}, worst settle {settle:.2f} s")
    record(7, ok, "; ".join(lines))
    assert ok


def test_c8_noise_robustness(record):
    lines, ok = [], True
    for name in ("sinusoid_obstacles", "circle_from_center"):
        errors, max_j, reached, settle = _jump_stats(sweep(name, 0.3))
        good = not errors and max_j <= 2
        ok &= good
        lines.append(f"{name}: noise 0.3 (c0-c10) n_c, {len(errors)} errors, max jumps {max_j}")
    record(8, ok, "; ".join(lines))
    assert ok


def test_c9_planner(record, tmp_path):
    n_ok = n = 0
    identical = True
    for name in ("sinusoid_obstacles", "circle_from_center"):
        sc = bundled(name)
        goal = sc.goal_set()
        start = sc.initial[:4]
        for seed in range(20):
            p = plan(start, goal, sc.obstacles, sc.car, seed=seed, config=sc.planner)
            n += 1
            n_ok += validate_plan(p, start, goal, sc.obstacles, sc.car).ok
            if seed < 5:
                q = plan(start, goal, sc.obstacles, sc.car, seed=seed, config=sc.planner)
                p.to_csv(tmp_path / "a.csv")
                q.to_csv(tmp_path / "b.csv")
                identical &= (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    # plans the supervisor emitted during the hybrid sweeps
    for key, runs in _SWEEPS.items():
        for sc, tr, _, err in runs:
            if tr is None:
                continue
            for k, p in enumerate(tr.plans):
                n += 1
                start = sc.initial[:4] if k == 0 else p.states[0]
                n_ok += validate_plan(p, start, sc.goal_set(), sc.obstacles, sc.car).ok
    ok = n_ok == n and identical
    record(9, ok, f"{n_ok}/{n} plans pass all four checks; repeated seeds byte-identical: {identical}")
    assert ok


def test_c10_rk4_order(record):
    def err(dt, T=2.0, c=0.4):
        tr = integrate(car_dynamics, (0, 0, 0.3, c), (1.0, 0.0), dt, int(round(T / dt)), CAR)
        return np.linalg.norm(tr.states[-1, :3] - arc_endpoint((0, 0, 0.3), 1.0, c, CAR.length, T)[:3])

    factor = err(0.04) / err(0.02)
    ok = 12.0 <= factor <= 20.0
    record(10, ok, f"error ratio for halved step {factor:.2f} (in [12, 20])")
    assert ok
