"""Kinematic car, its dynamic extension, and fixed-step RK4 integration.

State layouts (plain numpy arrays):

* car state ``x = (x1, x2, x3, x4)``: position, heading, steering angle;
* extended state ``xbar = (x1, ..., x4, x5, x6)`` where the forward speed is
  ``vrm + x5`` and ``x6`` is its rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import NonFiniteState, SteeringLimit

#: slack allowed on the steering check so that clamped states pass
STEER_TOL = 1e-12


@dataclass(frozen=True)
class CarParams:
    length: float = 0.25
    x4_max: float = math.pi / 4
    vrm: float = 1.0

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("length must be positive")
        if not 0.0 < self.x4_max < math.pi / 2:
            raise ValueError("x4_max must lie in (0, pi/2)")
        if self.vrm == 0:
            raise ValueError("vrm must be nonzero")

    @property
    def min_turn_radius(self) -> float:
        return self.length / math.tan(self.x4_max)

    @property
    def max_curvature(self) -> float:
        return math.tan(self.x4_max) / self.length


class CarInput(NamedTuple):
    v: float
    omega: float


class AuxInput(NamedTuple):
    u1: float
    u2: float


def _check_steer(x4, params):
    if abs(x4) > params.x4_max + STEER_TOL:
        raise SteeringLimit(f"|x4|={abs(x4):.6g} exceeds x4_max={params.x4_max:.6g}")


def car_dynamics(state, inp, params: CarParams, check: bool = True) -> np.ndarray:
    x3, x4 = state[2], state[3]
    if check:
        _check_steer(x4, params)
    v, w = inp
    return np.array([v * math.cos(x3), v * math.sin(x3), v / params.length * math.tan(x4), w])


def extended_dynamics(state, inp, params: CarParams, check: bool = True) -> np.ndarray:
    x3, x4, x5, x6 = state[2], state[3], state[4], state[5]
    if check:
        _check_steer(x4, params)
    u1, u2 = inp
    v = params.vrm + x5
    return np.array([v * math.cos(x3), v * math.sin(x3), v / params.length * math.tan(x4), u2, x6, u1])


def rk4_step(f: Callable, x: np.ndarray, u, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step of ``x' = f(x, u)`` with ``u`` held."""
    k1 = f(x, u)
    k2 = f(x + 0.5 * dt * k1, u)
    k3 = f(x + 0.5 * dt * k2, u)
    k4 = f(x + dt * k3, u)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def clamp_steering(x: np.ndarray, params: CarParams) -> bool:
    """Clamp ``x[3]`` in place; return whether clamping happened."""
    if x[3] > params.x4_max:
        x[3] = params.x4_max
        return True
    if x[3] < -params.x4_max:
        x[3] = -params.x4_max
        return True
    return False


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    #: ``(step index, unclamped steering value)`` for every clamp
    clamp_events: list = field(default_factory=list)


def integrate(dynamics, state, inputs, dt: float, steps: int, params: CarParams | None = None, t0: float = 0.0) -> Trajectory:
    """Integrate ``dynamics(x, u, params)`` with zero-order-hold inputs.

    ``inputs`` is either a constant input or a callable ``(k, t, x) -> u``
    evaluated at the start of each step. With ``params`` given, steering is
    clamped to ``+-x4_max`` after every step and each clamp is logged.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.array(state, dtype=float)
    if params is None:
        f = lambda z, u: dynamics(z, u)
    else:
        f = lambda z, u: dynamics(z, u, params, check=False)
    signal = inputs if callable(inputs) else (lambda k, t, z, _u=tuple(inputs): _u)
    xs = np.empty((steps + 1, x.size))
    us = []
    xs[0] = x
    events = []
    for k in range(steps):
        t = t0 + k * dt
        u = signal(k, t, x)
        us.append(tuple(u))
        x = rk4_step(f, x, u, dt)
        if not np.all(np.isfinite(x)):
            raise NonFiniteState(f"non-finite state at step {k + 1}: {x}")
        if params is not None and x.size >= 4:
            raw = x[3]
            if clamp_steering(x, params):
                events.append((k + 1, float(raw)))
        xs[k + 1] = x
    times = t0 + dt * np.arange(steps + 1)
    return Trajectory(times, xs, np.array(us, dtype=float).reshape(steps, -1), events)


def forward_speed(state_derivative) -> float:
    return math.hypot(state_derivative[0], state_derivative[1])
