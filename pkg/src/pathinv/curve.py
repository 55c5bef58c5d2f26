"""Reference paths with both a unit-speed parametrisation and an implicit form.

Two families are supported:

* :class:`Circle` -- closed, everything analytic.
* :class:`GraphCurve` -- open graphs ``y2 = f(y1)`` (polynomials, sinusoids).
  The native parameter is ``t = y1``; the unit-speed parameter ``lambda`` is
  the arc length measured from ``t = 0``. Arc length is tabulated once with
  Gauss-Legendre panels, so derivatives with respect to ``lambda`` stay exact
  (they are expressed through ``f`` and its derivatives, never through the
  table).

Besides the geometric queries, each curve exposes :meth:`Curve.jets`, which
pushes a third-order jet of the position through the projection map and the
level function. That is the workhorse behind the Lie derivatives in
:mod:`pathinv.tfl`.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _jets as J
from .errors import CurvatureInfeasible, NonUniqueProjection, NotInNeighborhood, ScenarioError

TWO_PI = 2.0 * math.pi

#: on-path test tolerance on ``|s(y)|``
ON_PATH_TOL = 1e-7
NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50
#: two local minima whose distances differ by less than this are ambiguous
UNIQUE_TOL = 1e-6


def wrap_angle(a):
    """Wrap to ``(-pi, pi]``."""
    w = np.mod(np.asarray(a, dtype=float) + math.pi, TWO_PI) - math.pi
    w = np.where(w <= -math.pi, w + TWO_PI, w)
    return float(w) if np.ndim(w) == 0 else w


def _wrap_scalar(a: float) -> float:
    w = math.fmod(a + math.pi, TWO_PI)
    if w < 0.0:
        w += TWO_PI
    w -= math.pi
    return math.pi if w <= -math.pi else w


class PositionJets(NamedTuple):
    """Jets of the projection parameter and level value along a position jet."""

    pi: tuple
    s: tuple
    grad_pi: tuple
    grad_s: tuple
    #: distance from the jet base point to the curve
    dist: float


class Curve:
    """Common interface. Subclasses fill in the geometry."""

    kind: str = ""
    closed: bool = False
    #: period for closed curves, ``None`` otherwise
    length: float | None = None

    # domain of the unit-speed parameter actually represented
    lam_min: float = 0.0
    lam_max: float = 0.0

    def sigma(self, lam):
        raise NotImplementedError

    def sigma_d1(self, lam):
        raise NotImplementedError

    def sigma_d2(self, lam):
        raise NotImplementedError

    def s(self, y) -> float:
        raise NotImplementedError

    def grad_s(self, y):
        raise NotImplementedError

    def project(self, y, delta_y: float | None = None) -> float:
        raise NotImplementedError

    def distance(self, y) -> float:
        raise NotImplementedError

    def distance_lower(self, points) -> np.ndarray:
        """Lower bounds on the distance for a batch of points (exact by default)."""
        return np.array([self.distance(p) for p in np.atleast_2d(points)])

    def jets(self, path) -> PositionJets:
        raise NotImplementedError

    def signed_curvature(self, lam):
        d1 = np.asarray(self.sigma_d1(lam))
        d2 = np.asarray(self.sigma_d2(lam))
        k = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        return float(k) if np.ndim(k) == 0 else k

    def curvature(self, lam):
        d2 = np.asarray(self.sigma_d2(lam))
        k = np.hypot(d2[..., 0], d2[..., 1])
        return float(k) if np.ndim(k) == 0 else k

    def tangent_angle(self, lam):
        d1 = np.asarray(self.sigma_d1(lam))
        return wrap_angle(np.arctan2(d1[..., 1], d1[..., 0]))

    def sample_lambdas(self, n: int = 10_000) -> np.ndarray:
        if self.closed:
            return np.linspace(0.0, self.length, n, endpoint=False)
        return np.linspace(self.lam_min, self.lam_max, n)

    def grad_pi(self, y):
        return self.jets((tuple(y), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0))).grad_pi


class Circle(Curve):
    """Counter-clockwise circle ``lambda -> c + R (cos(lambda/R), sin(lambda/R))``.

    Implicit form ``s(y) = |y - c|^2 - R^2``, which for the unit circle is the
    familiar ``y1^2 + y2^2 - 1``.
    """

    kind = "circle"
    closed = True

    def __init__(self, radius: float = 1.0, center=(0.0, 0.0)):
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.center = (float(center[0]), float(center[1]))
        self.length = TWO_PI * self.radius
        self.lam_min, self.lam_max = 0.0, self.length

    def __repr__(self):
        return f"Circle(radius={self.radius}, center={self.center})"

    def _angle(self, lam):
        return np.asarray(lam, dtype=float) / self.radius

    def sigma(self, lam):
        a = self._angle(lam)
        return np.stack([self.center[0] + self.radius * np.cos(a), self.center[1] + self.radius * np.sin(a)], axis=-1)

    def sigma_d1(self, lam):
        a = self._angle(lam)
        return np.stack([-np.sin(a), np.cos(a)], axis=-1)

    def sigma_d2(self, lam):
        a = self._angle(lam)
        return np.stack([-np.cos(a), -np.sin(a)], axis=-1) / self.radius

    def s(self, y):
        dx, dy = y[0] - self.center[0], y[1] - self.center[1]
        return dx * dx + dy * dy - self.radius**2

    def grad_s(self, y):
        return np.array([2.0 * (y[0] - self.center[0]), 2.0 * (y[1] - self.center[1])])

    def distance(self, y) -> float:
        return abs(math.hypot(y[0] - self.center[0], y[1] - self.center[1]) - self.radius)

    def distance_lower(self, points) -> np.ndarray:
        P = np.atleast_2d(np.asarray(points, dtype=float))
        return np.abs(np.hypot(P[:, 0] - self.center[0], P[:, 1] - self.center[1]) - self.radius)

    def project(self, y, delta_y=None) -> float:
        dx, dy = y[0] - self.center[0], y[1] - self.center[1]
        r = math.hypot(dx, dy)
        if delta_y is not None and abs(r - self.radius) >= delta_y:
            raise NotInNeighborhood(f"distance {abs(r - self.radius):.6g} >= delta_y={delta_y}")
        if r < 1e-12:
            raise NonUniqueProjection("every point of the circle is equidistant from its center")
        a = math.atan2(dy, dx)
        if a < 0.0:
            a += TWO_PI
        return self.radius * a

    def jets(self, path) -> PositionJets:
        y0, y1, y2, y3 = path
        z0 = complex(y0[0] - self.center[0], y0[1] - self.center[1])
        if abs(z0) < 1e-12:
            raise NonUniqueProjection("projection undefined at the circle center")
        z1, z2, z3 = complex(*y1), complex(*y2), complex(*y3)
        # theta = Im log z
        w1 = z1 / z0
        w2 = z2 / z0 - w1 * w1
        w3 = z3 / z0 - 3.0 * w1 * (z2 / z0) + 2.0 * w1 * w1 * w1
        ang = cmath.phase(z0)
        if ang < 0.0:
            ang += TWO_PI
        R = self.radius
        pi_jet = (R * ang, R * w1.imag, R * w2.imag, R * w3.imag)
        zc0, zc1 = z0.conjugate(), z1.conjugate()
        s_jet = (
            abs(z0) ** 2 - R * R,
            2.0 * (zc0 * z1).real,
            2.0 * (zc0 * z2).real + 2.0 * abs(z1) ** 2,
            2.0 * (zc0 * z3).real + 6.0 * (zc1 * z2).real,
        )
        r2 = abs(z0) ** 2
        grad_pi = (-R * z0.imag / r2, R * z0.real / r2)
        grad_s = (2.0 * z0.real, 2.0 * z0.imag)
        return PositionJets(pi_jet, s_jet, grad_pi, grad_s, abs(abs(z0) - R))


# 8-point Gauss-Legendre rule on [-1, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class GraphCurve(Curve):
    """Open curve ``y2 = f(y1)`` over a finite window of ``y1``.

    Parameters
    ----------
    fderivs:
        callable ``t -> (f, f', f'', f''', f'''')`` accepting floats or arrays.
    window:
        ``(t_min, t_max)``; the represented piece of the (conceptually
        infinite) graph.
    """

    closed = False
    length = None

    def __init__(self, fderivs, window=(-50.0, 50.0), kind="graph", n_grid=2048, panel=0.05, label=None):
        t_min, t_max = float(window[0]), float(window[1])
        if not t_max > t_min:
            raise ValueError("window must be increasing")
        self._fd = fderivs
        self.kind = kind
        self.label = label or kind
        self.window = (t_min, t_max)
        self.n_grid = max(int(n_grid), int(math.ceil((t_max - t_min) / panel)) + 1)

        # arc-length table from t = 0
        lo, hi = min(t_min, 0.0), max(t_max, 0.0)
        n_pan = max(1, int(math.ceil((hi - lo) / panel)))
        edges = np.linspace(lo, hi, n_pan + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        nodes = mid[:, None] + half[:, None] * _GL_X[None, :]
        speed = self._speed(nodes)
        pieces = (speed * _GL_W[None, :]).sum(axis=1) * half
        self._edges = edges
        self._cum = np.concatenate([[0.0], np.cumsum(pieces)])
        self._cum = self._cum - self.arclength(0.0)

        self.lam_min = float(self.arclength(t_min))
        self.lam_max = float(self.arclength(t_max))

        self._tg = np.linspace(t_min, t_max, self.n_grid)
        d = self._fd(self._tg)
        self._fg = np.asarray(d[0], dtype=float)
        h = self._tg[1] - self._tg[0]
        # Lipschitz bound on f from the grid plus a one-cell curvature allowance
        self._lip = float(np.max(np.abs(d[1])) + h * np.max(np.abs(d[2]))) * 1.01
        # longest grid chord: a vertex is never farther than this from its local minimum
        self._chord = float(np.max(np.hypot(np.diff(self._tg), np.diff(self._fg))))

    def __repr__(self):
        return f"GraphCurve({self.label}, window={self.window})"

    # --- native-parameter helpers -------------------------------------------------
    def _speed(self, t):
        d1 = self._fd(t)[1]
        return np.sqrt(1.0 + np.asarray(d1) ** 2)

    def _gl(self, a, b):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        return float(np.dot(_GL_W, self._speed(mid + half * _GL_X)) * half)

    def arclength(self, t):
        """Unit-speed parameter ``lambda`` of the point with ``y1 = t``."""
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(self._edges, t) - 1, 0, len(self._edges) - 2)
        a = self._edges[k]
        mid, half = 0.5 * (a + t), 0.5 * (t - a)
        nodes = mid[..., None] + half[..., None] * _GL_X
        out = self._cum[k] + (self._speed(nodes) * _GL_W).sum(axis=-1) * half
        return float(out) if out.ndim == 0 else out

    def native(self, lam):
        """Inverse of :meth:`arclength` (Newton from a table guess)."""
        lam = np.asarray(lam, dtype=float)
        t = np.interp(lam, self._cum, self._edges)
        for _ in range(8):
            step = (self.arclength(t) - lam) / self._speed(t)
            t = t - step
            if np.all(np.abs(step) < 1e-14):
                break
        return float(t) if np.ndim(t) == 0 else t

    # --- geometry -----------------------------------------------------------------
    def sigma(self, lam):
        t = self.native(lam)
        return np.stack([np.asarray(t, dtype=float), np.asarray(self._fd(t)[0], dtype=float)], axis=-1)

    def sigma_d1(self, lam):
        t = self.native(lam)
        d = self._fd(t)
        sp = np.sqrt(1.0 + d[1] ** 2)
        return np.stack([1.0 / sp, d[1] / sp], axis=-1)

    def sigma_d2(self, lam):
        t = self.native(lam)
        d = self._fd(t)
        sp2 = 1.0 + d[1] ** 2
        # (c'' |c'|^2 - c' (c'.c'')) / |c'|^4 with c' = (1, f'), c'' = (0, f'')
        dot = d[1] * d[2]
        return np.stack([-dot / sp2**2, (d[2] * sp2 - d[1] * dot) / sp2**2], axis=-1)

    def s(self, y):
        return y[1] - float(self._fd(y[0])[0])

    def grad_s(self, y):
        return np.array([-float(self._fd(y[0])[1]), 1.0])

    def _foot_candidates(self, y):
        y1, y2 = float(y[0]), float(y[1])
        d2 = (self._tg - y1) ** 2 + (self._fg - y2) ** 2
        interior = np.flatnonzero((d2[1:-1] <= d2[:-2]) & (d2[1:-1] <= d2[2:])) + 1
        idx = list(interior)
        if d2[0] <= d2[1]:
            idx.append(0)
        if d2[-1] <= d2[-2]:
            idx.append(len(d2) - 1)
        idx.sort(key=lambda i: d2[i])
        return idx[:4], d2

    def _refine(self, y, i):
        y1, y2 = float(y[0]), float(y[1])
        tg = self._tg
        lo = tg[max(i - 1, 0)]
        hi = tg[min(i + 1, len(tg) - 1)]

        def g_and_dg(t):
            f, f1, f2 = (float(v) for v in self._fd(t)[:3])
            g = (y1 - t) + (y2 - f) * f1
            dg = -(1.0 + f1 * f1) + (y2 - f) * f2
            return g, dg

        g_lo, _ = g_and_dg(lo)
        g_hi, _ = g_and_dg(hi)
        t = float(tg[i])
        if g_lo * g_hi > 0:
            # minimum at a window edge
            return (lo if g_lo < 0 else hi), False
        for _ in range(NEWTON_MAXITER):
            g, dg = g_and_dg(t)
            if g == 0.0:
                break
            if (g > 0) == (g_lo > 0):
                lo, g_lo = t, g
            else:
                hi = t
            step = g / dg if dg < 0.0 else math.inf
            if abs(step) < NEWTON_TOL * (1.0 + abs(t)):
                t = min(max(t - step, lo), hi)
                break
            t_new = t - step
            if not (lo <= t_new <= hi):
                t_new = 0.5 * (lo + hi)
            t = t_new
        return t, True

    def _foot(self, y, check_unique=True):
        idx, d2 = self._foot_candidates(y)
        found = []
        for i in idx:
            if found and math.sqrt(d2[i]) - self._chord > found[0][0] + UNIQUE_TOL:
                break
            t, interior = self._refine(y, i)
            f = float(self._fd(t)[0])
            found.append((math.hypot(y[0] - t, y[1] - f), t, interior))
            found.sort()
        best = found[0]
        if check_unique:
            for d, t, _ in found[1:]:
                if abs(d - best[0]) < UNIQUE_TOL and abs(t - best[1]) > 1e-6:
                    raise NonUniqueProjection(f"foot points t={best[1]:.9g} and t={t:.9g} are equidistant")
        return best

    def distance(self, y) -> float:
        return self._foot(y, check_unique=False)[0]

    def distance_lower(self, points) -> np.ndarray:
        """``|y2 - f(y1)| / sqrt(1 + L^2)`` with ``L >= sup |f'|``; never above the true distance.

        Points left or right of the window get their horizontal gap instead.
        """
        P = np.atleast_2d(np.asarray(points, dtype=float))
        t_min, t_max = self.window
        inside = (P[:, 0] >= t_min) & (P[:, 0] <= t_max)
        vert = np.abs(P[:, 1] - np.asarray(self._fd(np.clip(P[:, 0], t_min, t_max))[0])) / math.sqrt(1.0 + self._lip**2)
        gap = np.maximum(t_min - P[:, 0], P[:, 0] - t_max)
        return np.where(inside, vert, np.maximum(gap, 0.0))

    def project(self, y, delta_y=None) -> float:
        d, t, interior = self._foot(y)
        if delta_y is not None and d >= delta_y:
            raise NotInNeighborhood(f"distance {d:.6g} >= delta_y={delta_y}")
        if not interior:
            raise NotInNeighborhood(f"foot point at the curve window edge t={t:.6g}")
        return float(self.arclength(t))

    def jets(self, path) -> PositionJets:
        y0, y1, y2, y3 = path
        d, t0, interior = self._foot(y0)
        if not interior:
            raise NotInNeighborhood(f"foot point at the curve window edge t={t0:.6g}")
        d0 = [float(v) for v in self._fd(t0)]
        px = (y0[0], y1[0], y2[0], y3[0])
        py = (y0[1], y1[1], y2[1], y3[1])
        base = (y0[1] - d0[0]) * d0[2] - (1.0 + d0[1] ** 2)  # dG/dt at the foot

        # foot parameter t(tau) solves G = (y - c(t)) . c'(t) = 0; series Newton
        T = (t0, 0.0, 0.0, 0.0)
        fj = (d0[0], d0[1], d0[2], d0[3])
        f1j = (d0[1], d0[2], d0[3], d0[4])
        for _ in range(3):
            F = J.compose(fj, T)
            F1 = J.compose(f1j, T)
            G = J.add(J.sub(px, T), J.mul(J.sub(py, F), F1))
            T = (t0, T[1] - G[1] / base, T[2] - G[2] / base, T[3] - G[3] / base)

        sp = math.sqrt(1.0 + d0[1] ** 2)
        dot = d0[1] * d0[2]
        S = (
            float(self.arclength(t0)),
            sp,
            dot / sp,
            (d0[2] ** 2 + d0[1] * d0[3]) / sp - dot * dot / sp**3,
        )
        pi_jet = J.compose(S, T)
        e = [float(v) for v in self._fd(y0[0])[:4]]
        s_jet = J.sub(py, J.compose(e, px))
        g = -sp / base
        grad_pi = (g, g * d0[1])
        grad_s = (-e[1], 1.0)
        return PositionJets(pi_jet, s_jet, grad_pi, grad_s, d)


def poly(coeffs, window=(-50.0, 50.0), **kw) -> GraphCurve:
    """``y2 = sum_i coeffs[i] * y1**i`` (ascending order)."""
    c = [np.asarray(coeffs, dtype=float)]
    for _ in range(4):
        c.append(np.polynomial.polynomial.polyder(c[-1]) if len(c[-1]) > 1 else np.zeros(1))
    P = np.polynomial.polynomial.polyval

    cl = [[float(v) for v in ci[::-1]] for ci in c]

    def fd(t):
        if isinstance(t, float):
            out = []
            for ci in cl:
                acc = 0.0
                for v in ci:
                    acc = acc * t + v
                out.append(acc)
            return tuple(out)
        return tuple(P(t, ci) for ci in c)

    kind = "line" if len(np.trim_zeros(c[0], "b")) <= 2 else "poly"
    return GraphCurve(fd, window, kind=kind, label=f"poly{list(coeffs)}", **kw)


def sinusoid(amplitude=1.0, frequency=1.0, window=(-50.0, 50.0), **kw) -> GraphCurve:
    """``y2 = amplitude * sin(frequency * y1)``."""
    A, w = float(amplitude), float(frequency)

    def fd(t):
        if isinstance(t, float):
            sn, cs = math.sin(w * t), math.cos(w * t)
        else:
            sn, cs = np.sin(w * t), np.cos(w * t)
        return (A * sn, A * w * cs, -A * w * w * sn, -A * w**3 * cs, A * w**4 * sn)

    return GraphCurve(fd, window, kind="sinusoid", label=f"{A}*sin({w}*y1)", **kw)


def make_curve(spec: dict) -> Curve:
    """Build a curve from its scenario-file description."""
    spec = dict(spec)
    kind = spec.pop("type", None)
    allowed = {
        "circle": {"radius", "center"},
        "poly": {"coeffs", "window"},
        "sinusoid": {"amplitude", "frequency", "window"},
    }
    if kind not in allowed:
        raise ScenarioError(f"unknown curve type {kind!r}")
    extra = set(spec) - allowed[kind]
    if extra:
        raise ScenarioError(f"unknown curve keys {sorted(extra)}")
    try:
        if kind == "circle":
            return Circle(**spec)
        if kind == "poly":
            return poly(**spec)
        return sinusoid(**spec)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"bad curve spec: {exc}") from exc


def eval_implicit(curve: Curve, y) -> float:
    return curve.s(y)


def project(curve: Curve, y, delta_y=None) -> float:
    return curve.project(y, delta_y)


def curvature(curve: Curve, lam):
    return curve.curvature(lam)


def tangent_angle(curve: Curve, lam):
    return curve.tangent_angle(lam)


@dataclass(frozen=True)
class FeasibilityReport:
    ok: bool
    k_max: float
    bound: float
    worst_lambda: float

    @property
    def margin(self) -> float:
        return self.bound - self.k_max


def check_feasibility(curve: Curve, car, n: int = 10_000, raise_on_violation: bool = True) -> FeasibilityReport:
    """Sampled check of ``sup K < tan(x4_max) / length``."""
    lam = curve.sample_lambdas(n)
    K = np.asarray(curve.curvature(lam))
    i = int(np.argmax(K))
    bound = math.tan(car.x4_max) / car.length
    rep = FeasibilityReport(bool(K[i] < bound), float(K[i]), bound, float(lam[i]))
    if not rep.ok and raise_on_violation:
        raise CurvatureInfeasible(
            f"max curvature {rep.k_max:.6g} at lambda={rep.worst_lambda:.6g} exceeds {bound:.6g}",
            worst_lambda=rep.worst_lambda,
            margin=rep.margin,
        )
    return rep


@dataclass(frozen=True)
class Neighborhood:
    """Tube radius and the hysteresis constants of the supervisor sets."""

    delta_y: float
    c1: float = 0.4
    c10: float = 0.6
    c0: float = 0.9
    n_c: float | None = None

    def __post_init__(self):
        if self.n_c is None:
            object.__setattr__(self, "n_c", self.delta_y)
        if not self.delta_y > 0:
            raise ValueError("delta_y must be positive")
        if not (0.0 < self.c1 < self.c10 < self.c0 < 1.0):
            raise ValueError(f"need 0 < c1 < c10 < c0 < 1, got {self.c1}, {self.c10}, {self.c0}")
        if not self.n_c > 0:
            raise ValueError("n_c must be positive")

    def check_car(self, car):
        r_min = car.length / math.tan(car.x4_max)
        if not self.delta_y < r_min:
            raise ValueError(f"delta_y={self.delta_y} must be below the minimal turning radius {r_min:.6g}")
        if self.c0 * self.n_c >= self.delta_y:
            raise ValueError("c0 * n_c must stay inside the delta_y tube")
