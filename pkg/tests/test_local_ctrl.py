import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import qp_grid, qp_local_grid
from pathinv.curve import Circle
from pathinv.errors import HeadingViolation, NotInNeighborhood
from pathinv.local_ctrl import (
    BarrierConfig,
    FiniteTimeGains,
    LocalController,
    SpeedReference,
    barrier_terms,
    homogeneous_exponents,
    kappa0,
    kappa0_detail,
    kappa_xi,
    kkt_residuals,
    qp_filter,
    qp_rows,
)
from pathinv.tfl import from_transverse_on_path, kappa_fb, lie_derivatives
from pathinv.vehicle import CarParams

CAR = CarParams(0.25, math.pi / 4, 1.0)
CFG = BarrierConfig()


def test_kappa_xi_examples():
    assert kappa_xi((0.0, 0.0, 0.0), FiniteTimeGains()) == 0.0
    assert kappa_xi((1.0, 1.0, 1.0), FiniteTimeGains(6, 11, 6, beta=1.0)) == pytest.approx(-23.0)
    assert kappa_xi((-1.0, 0.0, 0.0), FiniteTimeGains(6, 11, 6, beta=0.9)) == pytest.approx(6.0)
    g = FiniteTimeGains(beta=0.9)
    assert g.exponents == pytest.approx((0.9 / 1.1, 0.9, 1.0))
    # odd symmetry of the law
    assert kappa_xi((0.3, -0.2, 0.1), g) == pytest.approx(-kappa_xi((-0.3, 0.2, -0.1), g))


def test_gain_validation():
    with pytest.raises(ValueError):
        FiniteTimeGains(6, 1, 1)  # k2 k3 <= k1
    with pytest.raises(ValueError):
        FiniteTimeGains(beta=1.2)
    with pytest.raises(ValueError):
        FiniteTimeGains(beta=0.5, epsilon=0.2)  # beta outside (1 - eps, 1)
    FiniteTimeGains(beta=0.9, epsilon=0.2)
    with pytest.raises(ValueError):
        FiniteTimeGains(exponent_rule="other")


def test_homogeneous_exponents_recursion():
    b = 0.8
    a1, a2, a3 = homogeneous_exponents(b)
    assert a3 == b
    assert a2 == pytest.approx(a3 * 1.0 / (2 * 1.0 - a3))
    assert a1 == pytest.approx(a2 * a3 / (2 * a3 - a2))
    assert homogeneous_exponents(1.0) == (1.0, 1.0, 1.0)


def test_beta_one_is_linear_feedback_with_hurwitz_roots():
    g = FiniteTimeGains(6, 11, 6, beta=1.0)
    rng = np.random.default_rng(0)
    for _ in range(20):
        xi = rng.normal(size=3)
        assert kappa_xi(xi, g) == pytest.approx(-(6 * xi[0] + 11 * xi[1] + 6 * xi[2]))
    eig = np.sort(np.linalg.eigvals(g.companion()).real)
    assert eig == pytest.approx([-3.0, -2.0, -1.0])


def test_barrier_examples():
    d = 0.02
    bt = barrier_terms((0.0, d, 0.0), CFG)
    assert bt.b == 0.0 and bt.psi1 == 0.0
    assert barrier_terms((0.0, 2 * d, 0.0), CFG).b == pytest.approx(-d)
    bt = barrier_terms((0.0, 0.01, 0.0), CFG)
    assert bt.b == pytest.approx(0.01) and bt.psi1 == pytest.approx(0.01)
    assert bt.lglf_b == -1.0


def test_qp_unconstrained_example():
    # eta at the reference with eta2 well above delta: nothing binds
    res = qp_filter((0.0, 1.0, 0.0), (1.0, 0.0), CFG)
    assert (res.v_par, res.slack) == (0.0, 0.0)
    assert res.active == frozenset()


def _check_against_grid(res, cfg):
    a, b, vm = res.clf_a, res.clf_b, res.v_min
    v, d, J = qp_local_grid(a, b, vm, cfg.penalty, res.v_par, res.slack)
    # no feasible point of the 10^6-point grid beats the analytic optimum
    assert J >= res.objective - 1e-9
    assert abs(v - res.v_par) < 1e-4 and abs(d - res.slack) < 1e-4


def test_qp_cbf_only_example():
    # eta2 below delta and braking: CBF must push v_par up, CLF row satisfied
    res = qp_filter((0.0, 0.015, -0.5), (0.015, -0.5), CFG)
    assert res.active == frozenset({"cbf"})
    assert res.v_par == pytest.approx(res.v_min) and res.slack == 0.0
    _check_against_grid(res, CFG)


def test_qp_clf_only_example():
    res = qp_filter((0.0, 1.0, 0.5), (1.0, 0.0), CFG)
    assert res.active == frozenset({"clf"})
    assert res.slack > 0 and res.v_par > res.v_min
    _check_against_grid(res, CFG)


def test_qp_matches_oracle_and_kkt():
    rng = np.random.default_rng(1)
    for _ in range(300):
        cfg = BarrierConfig(penalty=rng.uniform(1, 500), clf_gain=rng.uniform(0.1, 3), lambda0=rng.uniform(0.1, 3), lambda_k=rng.uniform(0.1, 3))
        eta = (0.0, rng.uniform(-0.5, 2.0), rng.uniform(-3, 3))
        ref = (rng.uniform(-1, 1), rng.uniform(-1, 1))
        res = qp_filter(eta, ref, cfg)
        assert res.feasible
        v, d, J = qp_grid(res.clf_a, res.clf_b, res.v_min, cfg.penalty)
        assert abs(v - res.v_par) < 1e-4 and abs(d - res.slack) < 1e-4
        assert abs(J - res.objective) < 1e-6
        assert max(kkt_residuals(res, cfg).values()) < 1e-8 * (1 + abs(res.clf_b) + abs(res.v_min))


@settings(max_examples=200, deadline=None)
@given(st.floats(-1.0, 3.0), st.floats(-5.0, 5.0), st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_qp_solution_lies_in_both_sets(eta2, eta3, r2, r3):
    res = qp_filter((0.0, eta2, eta3), (r2, r3), CFG)
    assert res.feasible
    a, b, vm = qp_rows((0.0, eta2, eta3), (r2, r3), CFG)
    assert res.v_par >= vm - 1e-12  # CBF row is hard
    if res.slack == 0.0:
        assert a * res.v_par <= b + 1e-9 * (1 + abs(b))  # exact CLF row
    else:
        assert a * res.v_par - res.slack <= b + 1e-9 * (1 + abs(b))  # relaxed CLF row


def test_speed_reference():
    assert SpeedReference("constant", value=0.5)(3.0) == (0.5, 0.0)
    r = SpeedReference("sinusoid", amplitude=2.0, frequency=0.5, offset=0.1)
    assert r(1.0) == pytest.approx((0.1 + 2 * math.sin(0.5), math.cos(0.5)))
    with pytest.raises(ValueError):
        SpeedReference("ramp")
    with pytest.raises(ValueError):
        SpeedReference("constant", amplitude=1.0)


def test_kappa0_equilibrium_example():
    c = Circle(1.0)
    x = from_transverse_on_path((0.3, 1.0, 0.0), c, CAR)
    out = kappa0_detail(x, c, CAR, FiniteTimeGains(), CFG, (1.0, 0.0), 0.0)
    assert out.v_perp == pytest.approx(0.0, abs=1e-12)
    assert out.qp.v_par == 0.0
    lie = lie_derivatives(x, c, CAR)
    assert out.u == pytest.approx(tuple(kappa_fb(x, c, CAR, 0.0, 0.0, lie=lie)))
    assert kappa0(x, c, CAR, FiniteTimeGains(), CFG, (1.0, 0.0), 0.0) == out.u


def test_kappa0_errors():
    c = Circle(1.0)
    x = from_transverse_on_path((0.3, 1.0, 0.0), c, CAR)
    back = x.copy()
    back[2] += math.pi
    with pytest.raises(HeadingViolation):
        kappa0(back, c, CAR, FiniteTimeGains(), CFG, (1.0, 0.0), 0.0)
    far = x.copy()
    far[:2] *= 1.5
    with pytest.raises(NotInNeighborhood):
        kappa0(far, c, CAR, FiniteTimeGains(), CFG, (1.0, 0.0), 0.0, delta_y=0.2)


def _simulate(ctrl, x, t0, T, dt):
    from pathinv.vehicle import extended_dynamics, rk4_step

    f = lambda z, u: extended_dynamics(z, u, CAR, check=False)
    out = []
    for k in range(int(round(T / dt))):
        t = t0 + k * dt
        o = ctrl(t, x)
        out.append((t, o.coords.eta, o.coords.xi, CAR.vrm + x[4]))
        x = rk4_step(f, x, o.u, dt)
    return out


def test_xi_decreases_to_zero():
    c = Circle(1.0)
    ctrl = LocalController(c, CAR, FiniteTimeGains(60, 47, 12, beta=0.97), CFG, SpeedReference("constant", value=1.0), 0.2)
    x = from_transverse_on_path((0.0, 1.0, 0.0), c, CAR)
    x[:2] *= 1.05
    rows = _simulate(ctrl, x, 0.0, 6.0, 0.01)
    n = np.array([np.linalg.norm(r[2]) for r in rows])
    assert n[0] > 0.04 and n[-1] < 1e-5


def test_barrier_with_decelerating_reference():
    # eta2 just above delta while eta2_ref = sin(t) heads below zero
    c = Circle(1.0)
    ctrl = LocalController(c, CAR, FiniteTimeGains(), CFG, SpeedReference("sinusoid"), None)
    t0 = math.pi / 2
    x = from_transverse_on_path((0.0, 0.1, 0.0), c, CAR)
    rows = _simulate(ctrl, x, t0, 8.0, 0.001)
    eta2 = np.array([r[1][1] for r in rows])
    assert eta2.min() >= CFG.delta - 1e-6
    # sign agreement of eta2 and the forward speed along the run
    speed = np.array([r[3] for r in rows])
    assert np.all(np.sign(eta2) == np.sign(speed))
    assert np.allclose(eta2, speed, atol=1e-9)  # unit circle, on path: |grad pi| = 1


def test_clf_row_degenerates_when_eta3_matches_reference():
    # L_g V = eta3 - eta3_ref; with that zero the relaxation takes the whole row
    res = qp_filter((0.0, 0.1, 0.0), (0.5, 0.0), CFG)
    assert res.clf_a == 0.0 and res.v_par == 0.0
    assert res.slack == pytest.approx(0.5 * 0.4**2)
