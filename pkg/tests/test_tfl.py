import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_time_derivative, circle_decoupling, circle_det, graph_foot, simpson_arclength
from pathinv.curve import Circle, poly, sinusoid
from pathinv.errors import NotInNeighborhood, Singularity
from pathinv.tfl import (
    decoupling_matrix,
    det_closed_form,
    from_transverse_on_path,
    kappa_fb,
    lie_derivatives,
    to_transverse,
    transverse_map,
    unextended_decoupling,
    virtual_output,
)
from pathinv.vehicle import CarParams, extended_dynamics, rk4_step

CAR = CarParams(0.25, math.pi / 4, 1.0)
CIRCLE = Circle(1.0)
SIN = sinusoid(1.0, 1.0, window=(-10.0, 10.0))


def random_circle_state(rng, dmax=0.19):
    th = rng.uniform(-math.pi, math.pi)
    r = 1.0 + rng.uniform(-dmax, dmax)
    return np.array([r * math.cos(th), r * math.sin(th), rng.uniform(-math.pi, math.pi), rng.uniform(-0.75, 0.75), rng.uniform(-0.9, 1.0), rng.uniform(-1, 1)])


def random_sin_state(rng):
    t = rng.uniform(-6, 6)
    return np.array([t, math.sin(t) + rng.uniform(-0.15, 0.15), rng.uniform(-math.pi, math.pi), rng.uniform(-0.75, 0.75), rng.uniform(-0.9, 1.0), rng.uniform(-1, 1)])


def drift(x):
    return extended_dynamics(x, (0.0, 0.0), CAR, check=False)


def test_virtual_output_examples():
    assert virtual_output(np.array([1.0, 0, 0, 0, 0, 0]), CIRCLE) == (0.0, 0.0)
    lam, s = virtual_output(np.array([0.0, 1.1, 0, 0, 0, 0]), CIRCLE)
    assert lam == pytest.approx(math.pi / 2) and s == pytest.approx(0.21)
    t_star, _ = graph_foot(np.sin, (1.0, 0.9), -10, 10)
    lam, s = virtual_output(np.array([1.0, 0.9, 0, 0, 0, 0]), SIN)
    assert lam == pytest.approx(simpson_arclength(np.cos, 0.0, t_star), abs=1e-8)
    assert s == pytest.approx(0.9 - math.sin(1.0), abs=1e-15)


def test_circle_entries_match_closed_forms():
    rng = np.random.default_rng(0)
    for _ in range(200):
        x = random_circle_state(rng)
        D = lie_derivatives(x, CIRCLE, CAR).decoupling
        assert np.allclose(D, circle_decoupling(x, CAR.length, CAR.vrm), rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("curve,sampler", [(CIRCLE, random_circle_state), (SIN, random_sin_state)], ids=["circle", "sinusoid"])
def test_lie_derivatives_match_flow_differences(curve, sampler):
    rng = np.random.default_rng(1)
    for _ in range(8):
        x = sampler(rng)
        lie = lie_derivatives(x, curve, CAR)
        s_of = lambda z: curve.s(z[:2])
        pi_of = lambda z: curve.project(z[:2])
        for k, tol in ((1, 1e-7), (2, 1e-5), (3, 1e-3)):
            fd_a = central_time_derivative(s_of, drift, x, order=k)
            fd_p = central_time_derivative(pi_of, drift, x, order=k)
            assert lie.alpha[k] == pytest.approx(fd_a, abs=tol * (1 + abs(fd_a)))
            assert lie.pi[k] == pytest.approx(fd_p, abs=tol * (1 + abs(fd_p)))


def _partial(fun, x, i, h=1e-6):
    e = np.zeros(6)
    e[i] = h
    return (fun(x + e) - fun(x - e)) / (2 * h)


@pytest.mark.parametrize("curve,sampler", [(CIRCLE, random_circle_state), (SIN, random_sin_state)], ids=["circle", "sinusoid"])
def test_input_directions_by_finite_differences(curve, sampler):
    # g1 = d/dx6 and g2 = d/dx4 for the extended car
    rng = np.random.default_rng(2)
    for _ in range(30):
        x = sampler(rng)
        lie = lie_derivatives(x, curve, CAR)
        for name, lg in (("pi", lie.lg_pi), ("alpha", lie.lg_alpha)):
            for k in (0, 1):
                f = lambda z: getattr(lie_derivatives(z, curve, CAR), name)[k]
                assert abs(_partial(f, x, 5)) < 1e-10 and abs(lg[0][k]) < 1e-10
                assert abs(_partial(f, x, 3)) < 1e-10 and abs(lg[1][k]) < 1e-10
            f2 = lambda z: getattr(lie_derivatives(z, curve, CAR), name)[2]
            assert lg[0][2] == pytest.approx(_partial(f2, x, 5), abs=1e-6 * (1 + abs(lg[0][2])))
            assert lg[1][2] == pytest.approx(_partial(f2, x, 3), abs=1e-6 * (1 + abs(lg[1][2])))


def test_unextended_matrix_is_singular():
    rng = np.random.default_rng(3)
    for _ in range(100):
        x = rng.uniform(-3, 3, 4)
        M = unextended_decoupling(x, (1.0, 0.0), (0.0, 1.0))
        assert M[1, 0] == 0.0 and M[1, 1] == 0.0
        assert M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0] == 0.0


def test_det_closed_form_and_singularity():
    rng = np.random.default_rng(4)
    for _ in range(200):
        x = random_circle_state(rng)
        dm = decoupling_matrix(x, CIRCLE, CAR)
        assert dm.det == pytest.approx(circle_det(x, CAR.length, CAR.vrm), rel=1e-9)
        assert dm.det == pytest.approx(det_closed_form(x, CAR, lie_derivatives(x, CIRCLE, CAR)), rel=1e-9)
    on_path = np.array([1.0, 0.0, math.pi / 2, math.atan(0.25), 0.0, 0.0])
    assert decoupling_matrix(on_path, CIRCLE, CAR).det != 0.0
    with pytest.raises(Singularity):
        decoupling_matrix(on_path + np.array([0, 0, 0, 0, -1.0, 0]), CIRCLE, CAR)
    with pytest.raises(Singularity):
        to_transverse(on_path + np.array([0, 0, 0, 0, -1.0, 0]), CIRCLE, CAR)


def test_tube_guard():
    with pytest.raises(NotInNeighborhood):
        lie_derivatives(np.array([1.3, 0, 0, 0, 0, 0]), CIRCLE, CAR, delta_y=0.2)


def test_from_transverse_examples():
    x = from_transverse_on_path((0.0, 1.0, 0.0), CIRCLE, CAR)
    assert np.allclose(x, (1.0, 0.0, math.pi / 2, math.atan(0.25), 0.0, 0.0))
    line = poly([0.0, 1.0], window=(-5, 5))
    x = from_transverse_on_path((1.0, 1.0, 0.0), line, CAR)
    assert x[3] == 0.0 and x[2] == pytest.approx(math.pi / 4)


@settings(max_examples=80, deadline=None)
@given(st.floats(-5.0, 5.0), st.floats(0.05, 2.0), st.floats(-2.0, 2.0))
def test_round_trip_on_sinusoid(lam, eta2, eta3):
    x = from_transverse_on_path((lam, eta2, eta3), SIN, CAR)
    eta, xi = to_transverse(x, SIN, CAR)
    assert np.allclose(eta, (lam, eta2, eta3), atol=1e-7)
    assert np.allclose(xi, 0.0, atol=1e-7)


def test_feedback_cancellation_and_closed_loop():
    rng = np.random.default_rng(5)
    for curve, sampler in ((CIRCLE, random_circle_state), (SIN, random_sin_state)):
        x = sampler(rng)
        x[4] = 0.2
        x[3] = 0.3
        lie = lie_derivatives(x, curve, CAR)
        u = kappa_fb(x, curve, CAR, lie.pi[3], lie.alpha[3])
        assert u == pytest.approx((0.0, 0.0), abs=1e-12)
        v_par, v_perp = 0.7, -1.3
        u = kappa_fb(x, curve, CAR, v_par, v_perp)
        dt = 1e-4
        f = lambda z, uu: extended_dynamics(z, uu, CAR, check=False)
        x1 = rk4_step(f, x, u, dt)
        x0 = rk4_step(f, x, u, -dt)
        e1, e0 = to_transverse(x1, curve, CAR), to_transverse(x0, curve, CAR)
        assert (e1.eta[2] - e0.eta[2]) / (2 * dt) == pytest.approx(v_par, abs=1e-4)
        assert (e1.xi[2] - e0.xi[2]) / (2 * dt) == pytest.approx(v_perp, abs=1e-4)


def test_transverse_map_jacobian_nonsingular():
    rng = np.random.default_rng(6)
    for _ in range(20):
        x = random_circle_state(rng, dmax=0.15)
        x[4] = abs(x[4]) + 0.1
        J = np.column_stack([_partial(lambda z: transverse_map(z, CIRCLE, CAR), x, i) for i in range(6)])
        assert abs(np.linalg.det(J)) > 1e-8
