"""Local path-invariant controller.

Transversal chain: finite-time law ``v_perp = -sum k_i sign(xi_i) |xi_i|^b_i``.
Tangential chain: ``v_par`` from a two-variable QP that softly tracks a speed
profile (CLF row with slack ``delta_s``) and hard-enforces a second-order
barrier keeping ``eta2 >= delta`` (and with it ``vrm + x5 > 0``).

Class-K functions are linear: ``beta(r) = lambda0 r`` inside ``psi1``,
``beta_k(r) = lambda_k r`` on the barrier row and ``alpha_k(r) = clf_gain r``
on the CLF row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .curve import Curve
from .errors import HeadingViolation
from .tfl import LieDerivatives, TransverseCoords, kappa_fb, lie_derivatives, to_transverse
from .vehicle import AuxInput, CarParams


def homogeneous_exponents(beta: float, n: int = 3) -> tuple:
    """Exponent recursion ``a_{i-1} = a_i a_{i+1} / (2 a_{i+1} - a_i)``.

    Starts from ``a_{n+1} = 1`` and ``a_n = beta``; returns ``(a_1, ..., a_n)``.
    """
    a = [0.0] * (n + 2)
    a[n + 1], a[n] = 1.0, beta
    for i in range(n, 1, -1):
        a[i - 1] = a[i] * a[i + 1] / (2.0 * a[i + 1] - a[i])
    return tuple(a[1 : n + 1])


@dataclass(frozen=True)
class FiniteTimeGains:
    """Gains ``k1..k3`` and exponent parameter ``beta`` of the transversal law.

    ``exponent_rule="standard"`` uses ``(beta/(2-beta), beta, 1)``;
    ``"homogeneous"`` uses :func:`homogeneous_exponents`.
    """

    k1: float = 6.0
    k2: float = 11.0
    k3: float = 6.0
    beta: float = 0.9
    epsilon: float | None = None
    exponent_rule: str = "standard"

    def __post_init__(self):
        if min(self.k1, self.k2, self.k3) <= 0:
            raise ValueError("gains must be positive")
        if not self.k2 * self.k3 > self.k1:
            raise ValueError("s^3 + k3 s^2 + k2 s + k1 is not Hurwitz (need k2*k3 > k1)")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if self.epsilon is not None:
            if not 0.0 < self.epsilon < 1.0:
                raise ValueError("epsilon must lie in (0, 1)")
            if not (1.0 - self.epsilon < self.beta < 1.0):
                raise ValueError(f"beta={self.beta} outside (1 - epsilon, 1) = ({1 - self.epsilon}, 1)")
        if self.exponent_rule not in ("standard", "homogeneous"):
            raise ValueError(f"unknown exponent rule {self.exponent_rule!r}")

    @property
    def gains(self) -> tuple:
        return (self.k1, self.k2, self.k3)

    @property
    def exponents(self) -> tuple:
        b = self.beta
        if self.exponent_rule == "homogeneous":
            return homogeneous_exponents(b)
        return (b / (2.0 - b), b, 1.0)

    def companion(self) -> np.ndarray:
        """Closed-loop matrix of the chain when every exponent is 1."""
        return np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-self.k1, -self.k2, -self.k3]])


def _spow(x: float, p: float) -> float:
    if x == 0.0:
        return 0.0
    return math.copysign(abs(x) ** p, x)


def kappa_xi(xi, gains: FiniteTimeGains) -> float:
    k = gains.gains
    b = gains.exponents
    return -(k[0] * _spow(xi[0], b[0]) + k[1] * _spow(xi[1], b[1]) + k[2] * _spow(xi[2], b[2]))


@dataclass(frozen=True)
class BarrierConfig:
    delta: float = 0.02
    lambda0: float = 1.0
    lambda_k: float = 1.0
    clf_gain: float = 1.0
    penalty: float = 100.0

    def __post_init__(self):
        for name in ("delta", "lambda0", "lambda_k", "clf_gain", "penalty"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


class SpeedReference:
    """Speed profile ``eta2_ref(t)`` with its derivative ``eta3_ref(t)``.

    ``SpeedReference("constant", value=1.0)`` or
    ``SpeedReference("sinusoid", amplitude=1.0, frequency=1.0, offset=0.0)``.
    """

    def __init__(self, kind: str = "constant", **params):
        self.kind = kind
        if kind == "constant":
            allowed = {"value"}
            self.value = float(params.get("value", 1.0))
        elif kind == "sinusoid":
            allowed = {"amplitude", "frequency", "offset"}
            self.amplitude = float(params.get("amplitude", 1.0))
            self.frequency = float(params.get("frequency", 1.0))
            self.offset = float(params.get("offset", 0.0))
        else:
            raise ValueError(f"unknown speed reference {kind!r}")
        extra = set(params) - allowed
        if extra:
            raise ValueError(f"unknown speed reference parameters {sorted(extra)}")
        self.params = dict(params)

    def __repr__(self):
        return f"SpeedReference({self.kind!r}, **{self.params})"

    def __call__(self, t: float) -> tuple:
        if self.kind == "constant":
            return (self.value, 0.0)
        w = self.frequency
        return (self.offset + self.amplitude * math.sin(w * t), self.amplitude * w * math.cos(w * t))


class BarrierTerms(NamedTuple):
    b: float
    psi0: float
    psi1: float
    lf_b: float
    lf2_b: float
    lglf_b: float


def barrier_terms(eta, cfg: BarrierConfig) -> BarrierTerms:
    """``b = delta - eta2`` along the chain ``eta' = (eta2, eta3, v_par)``."""
    b = cfg.delta - eta[1]
    lf_b = -eta[2]
    psi1 = lf_b + cfg.lambda0 * b
    return BarrierTerms(b, b, psi1, lf_b, 0.0, -1.0)


class QPResult(NamedTuple):
    v_par: float
    slack: float
    objective: float
    #: subset of ``{"clf", "cbf"}`` active at the optimum
    active: frozenset
    mu_clf: float
    mu_cbf: float
    #: CLF row written as ``clf_a * v_par - slack <= clf_b``
    clf_a: float
    clf_b: float
    #: CBF row written as ``v_par >= v_min``
    v_min: float
    feasible: bool = True


def qp_rows(eta, ref, cfg: BarrierConfig):
    """Coefficients ``(a, b, v_min)`` of the two QP rows."""
    e2 = eta[1] - ref[0]
    e3 = eta[2] - ref[1]
    V = 0.5 * (e2 * e2 + e3 * e3)
    lf_V = e2 * eta[2]
    lg_V = e3
    a = lg_V
    b = -lf_V - cfg.clf_gain * V
    bt = barrier_terms(eta, cfg)
    # lf2_b + lambda0 lf_b + lglf_b v <= -lambda_k psi1, with lglf_b = -1
    v_min = bt.lf2_b + cfg.lambda0 * bt.lf_b + cfg.lambda_k * bt.psi1
    return a, b, v_min


KKT_TOL = 1e-9


def qp_filter(eta, ref, cfg: BarrierConfig) -> QPResult:
    """Minimize ``v^2/2 + p d^2`` s.t. ``a v - d <= b`` and ``v >= v_min``.

    Strictly convex in ``(v, d)``, so exactly one of the four active sets
    satisfies the KKT conditions; they are enumerated in closed form.
    """
    a, b, v_min = qp_rows(eta, ref, cfg)
    p = cfg.penalty

    def kkt_result(v, d, mu, nu, active):
        obj = 0.5 * v * v + p * d * d
        return QPResult(v, d, obj, frozenset(active), mu, nu, a, b, v_min)

    scale = 1.0 + abs(a) + abs(b) + abs(v_min)
    tol = KKT_TOL * scale
    # no active constraint
    if b >= -tol and v_min <= tol:
        return kkt_result(0.0, 0.0, 0.0, 0.0, ())
    # CLF only: v = -mu a, d = mu / (2p)
    if b < 0.0:
        mu = -b / (a * a + 0.5 / p)
        v = -mu * a
        if v >= v_min - tol:
            return kkt_result(v, mu / (2.0 * p), mu, 0.0, ("clf",))
    # CBF only
    if v_min >= -tol and a * v_min <= b + tol:
        return kkt_result(v_min, 0.0, 0.0, v_min, ("cbf",))
    # both active
    d = a * v_min - b
    mu = 2.0 * p * d
    nu = v_min + mu * a
    if mu >= -tol and nu >= -tol:
        return kkt_result(v_min, d, mu, nu, ("clf", "cbf"))
    # unreachable for a strictly convex QP with a free slack; report rather than hide
    res = kkt_result(max(v_min, 0.0), max(a * max(v_min, 0.0) - b, 0.0), float("nan"), float("nan"), ())
    return res._replace(feasible=False)


def kkt_residuals(res: QPResult, cfg: BarrierConfig) -> dict:
    """Stationarity, primal/dual feasibility and complementarity residuals."""
    p = cfg.penalty
    v, d, mu, nu = res.v_par, res.slack, res.mu_clf, res.mu_cbf
    g_clf = res.clf_a * v - d - res.clf_b
    g_cbf = res.v_min - v
    return {
        "stationarity_v": abs(v + mu * res.clf_a - nu),
        "stationarity_d": abs(2.0 * p * d - mu),
        "primal_clf": max(g_clf, 0.0),
        "primal_cbf": max(g_cbf, 0.0),
        "dual": max(-mu, -nu, 0.0),
        "complementarity": max(abs(mu * g_clf), abs(nu * g_cbf)),
    }


class Kappa0Output(NamedTuple):
    u: AuxInput
    coords: TransverseCoords
    qp: QPResult
    v_perp: float
    heading: float
    dist: float


def kappa0_detail(xbar, curve: Curve, params: CarParams, gains: FiniteTimeGains, cfg: BarrierConfig, ref, t: float, delta_y=None, lie: LieDerivatives | None = None) -> Kappa0Output:
    lie = lie or lie_derivatives(xbar, curve, params, delta_y)
    heading = lie.heading_alignment
    if not heading > 0.0:
        raise HeadingViolation(f"<grad pi, heading> = {heading:.3g} <= 0")
    coords = to_transverse(xbar, curve, params, lie=lie)
    v_perp = kappa_xi(coords.xi, gains)
    r = ref(t) if callable(ref) else ref
    qp = qp_filter(coords.eta, r, cfg)
    u = kappa_fb(xbar, curve, params, qp.v_par, v_perp, lie=lie)
    return Kappa0Output(u, coords, qp, v_perp, heading, lie.dist)


def kappa0(xbar, curve: Curve, params: CarParams, gains: FiniteTimeGains, cfg: BarrierConfig, ref, t: float, delta_y=None) -> AuxInput:
    return kappa0_detail(xbar, curve, params, gains, cfg, ref, t, delta_y).u


@dataclass
class LocalController:
    """``kappa0`` bound to a path, car and tuning."""

    curve: Curve
    params: CarParams
    gains: FiniteTimeGains
    barrier: BarrierConfig
    reference: SpeedReference
    delta_y: float | None = None

    def __call__(self, t: float, xbar) -> Kappa0Output:
        return kappa0_detail(xbar, self.curve, self.params, self.gains, self.barrier, self.reference, t, self.delta_y)
