"""Pure-pursuit tracking of a motion plan.

Pure pursuit outputs a steering angle, but the car takes a steering rate, so a
proportional servo ``omega = K_steer * wrap(delta_cmd - x4)`` closes the gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curve import _wrap_scalar
from .errors import EmptyPlan
from .planner import MotionPlan
from .vehicle import CarInput, CarParams


@dataclass(frozen=True)
class PurePursuitConfig:
    lookahead: float = 0.5
    #: seconds; effective look-ahead is ``lookahead + speed_gain * |v|``
    speed_gain: float = 0.0
    nominal_speed: float = 1.0
    k_steer: float = 10.0

    def __post_init__(self):
        if not self.lookahead > 0:
            raise ValueError("lookahead must be positive")
        if self.speed_gain < 0:
            raise ValueError("speed_gain must be nonnegative")
        if not self.nominal_speed > 0:
            raise ValueError("nominal_speed must be positive")
        if not self.k_steer > 0:
            raise ValueError("k_steer must be positive")

    def effective_lookahead(self, speed: float) -> float:
        return self.lookahead + self.speed_gain * abs(speed)


def nearest_index(plan: MotionPlan, state, start: int = 0) -> int:
    if not len(plan):
        raise EmptyPlan("plan has no states")
    P = plan.positions[start:]
    d2 = (P[:, 0] - state[0]) ** 2 + (P[:, 1] - state[1]) ** 2
    return start + int(np.argmin(d2))


def lookahead_point(plan: MotionPlan, state, cfg: PurePursuitConfig, speed: float | None = None, nearest: int | None = None):
    """First plan position, at or after the nearest one, at least the look-ahead away.

    Falls back to the final plan position. Returns ``(point, index)``.
    """
    i0 = nearest_index(plan, state) if nearest is None else nearest
    ld = cfg.effective_lookahead(cfg.nominal_speed if speed is None else speed)
    P = plan.positions[i0:]
    d = np.hypot(P[:, 0] - state[0], P[:, 1] - state[1])
    far = np.flatnonzero(d >= ld)
    i = i0 + int(far[0]) if len(far) else len(plan) - 1
    return plan.positions[i].copy(), i


def steering_command(state, target, params: CarParams) -> float:
    """Pure-pursuit steering angle toward ``target``, clamped to ``+-x4_max``."""
    dx, dy = target[0] - state[0], target[1] - state[1]
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        return 0.0
    alpha = state[2] - math.atan2(dy, dx)
    delta = -math.atan2(2.0 * params.length * math.sin(alpha), dist)
    return max(-params.x4_max, min(params.x4_max, delta))


def kappa1(state, plan: MotionPlan, cfg: PurePursuitConfig, params: CarParams, nearest: int | None = None) -> CarInput:
    target, _ = lookahead_point(plan, state, cfg, nearest=nearest)
    delta = steering_command(state, target, params)
    return CarInput(cfg.nominal_speed, cfg.k_steer * _wrap_scalar(delta - state[3]))


class PurePursuit:
    """Pure pursuit bound to one plan; keeps a monotone progress index."""

    def __init__(self, plan: MotionPlan, cfg: PurePursuitConfig, params: CarParams, window: int = 200):
        if not len(plan):
            raise EmptyPlan("plan has no states")
        self.plan = plan
        self.cfg = cfg
        self.params = params
        self.window = window
        self.index = 0

    def __call__(self, state) -> CarInput:
        # nearest-point search restricted to a forward window keeps loops in the plan from confusing it
        P = self.plan.positions[self.index : self.index + self.window]
        d2 = (P[:, 0] - state[0]) ** 2 + (P[:, 1] - state[1]) ** 2
        self.index += int(np.argmin(d2))
        return kappa1(state, self.plan, self.cfg, self.params, nearest=self.index)
