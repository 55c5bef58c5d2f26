"""Transverse feedback linearization of the extended car around a path.

The virtual outputs are ``pi = varpi(x1, x2)`` (foot-point parameter) and
``alpha = s(x1, x2)`` (level value). Both depend on position only, so under
the drift vector field ``f`` their Lie derivatives are plain time derivatives
of ``phi(y(t))`` along the drift trajectory. With ``v = vrm + x5``,
``a = x6``, ``k = tan(x4) / length``, heading ``e = (cos x3, sin x3)`` and
normal ``n = (-sin x3, cos x3)``, the drift position jet is::

    y'   = v e
    y''  = a e + v^2 k n
    y''' = -v^3 k^2 e + 3 a v k n

and the input directions give::

    L_g1 L_f^2 phi = <grad phi, e>
    L_g2 L_f^2 phi = v^2 (1 + tan(x4)^2) / length * <grad phi, n>

while ``L_gj L_f^k phi`` vanishes for ``k = 0, 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .curve import Curve
from .errors import NotInNeighborhood, Singularity
from .vehicle import AuxInput, CarParams

#: ``|det D|`` and ``|vrm + x5|`` below this are treated as singular
SINGULAR_TOL = 1e-9


class TransverseCoords(NamedTuple):
    eta: tuple
    xi: tuple


class DecouplingMatrix(NamedTuple):
    matrix: np.ndarray
    det: float


@dataclass(frozen=True)
class LieDerivatives:
    """Everything the linearizing feedback needs at one state.

    ``pi[k]`` and ``alpha[k]`` hold ``L_f^k`` of the output for ``k = 0..3``.
    ``lg_pi[j][k]`` holds ``L_{g_{j+1}} L_f^k pi`` for ``k = 0, 1, 2``
    (same layout for ``lg_alpha``).
    """

    pi: tuple
    alpha: tuple
    lg_pi: tuple
    lg_alpha: tuple
    grad_pi: tuple
    grad_alpha: tuple
    speed: float
    dist: float

    @property
    def singular(self) -> bool:
        return abs(self.speed) < SINGULAR_TOL

    @property
    def decoupling(self) -> np.ndarray:
        return np.array(
            [
                [self.lg_pi[0][2], self.lg_pi[1][2]],
                [self.lg_alpha[0][2], self.lg_alpha[1][2]],
            ]
        )

    @property
    def heading_alignment(self) -> float:
        """``<grad pi, e>``; positive means the car moves with increasing ``pi``."""
        return self.lg_pi[0][2]


def drift_position_jet(xbar, params: CarParams):
    x3, x4, a = xbar[2], xbar[3], xbar[5]
    v = params.vrm + xbar[4]
    c, s = math.cos(x3), math.sin(x3)
    k = math.tan(x4) / params.length
    vk = v * k
    p1 = v
    p2e, p2n = a, v * vk
    p3e, p3n = -v * vk * vk, 3.0 * a * vk
    return (
        (xbar[0], xbar[1]),
        (p1 * c, p1 * s),
        (p2e * c - p2n * s, p2e * s + p2n * c),
        (p3e * c - p3n * s, p3e * s + p3n * c),
    )


def unextended_decoupling(x, grad_a, grad_b) -> np.ndarray:
    """``[[L_g1 A, L_g1 B], [L_g2 A, L_g2 B]]`` for the 4-state car with outputs on position.

    ``g1 = (cos x3, sin x3, 0, 0)`` multiplies ``v`` and ``g2 = (0, 0, 0, 1)``
    multiplies ``omega``. Outputs that depend on ``(x1, x2)`` only have a zero
    ``g2`` row, so this matrix is singular for every choice of outputs.
    """
    g1 = np.array([math.cos(x[2]), math.sin(x[2]), 0.0, 0.0])
    g2 = np.array([0.0, 0.0, 0.0, 1.0])
    da = np.array([grad_a[0], grad_a[1], 0.0, 0.0])
    db = np.array([grad_b[0], grad_b[1], 0.0, 0.0])
    return np.array([[g1 @ da, g1 @ db], [g2 @ da, g2 @ db]])


def lie_derivatives(xbar, curve: Curve, params: CarParams, delta_y: float | None = None) -> LieDerivatives:
    """Lie derivatives of ``(pi, alpha)`` for the extended car.

    Raises :class:`NotInNeighborhood` when ``delta_y`` is given and the
    position is not strictly inside the tube.
    """
    pj = curve.jets(drift_position_jet(xbar, params))
    if delta_y is not None and pj.dist >= delta_y:
        raise NotInNeighborhood(f"distance to path {pj.dist:.6g} >= delta_y={delta_y}")
    x3, x4 = xbar[2], xbar[3]
    v = params.vrm + xbar[4]
    c, s = math.cos(x3), math.sin(x3)
    sec2 = 1.0 + math.tan(x4) ** 2
    gain = v * v * sec2 / params.length

    def lg(grad):
        along = grad[0] * c + grad[1] * s
        normal = -grad[0] * s + grad[1] * c
        # g1 = d/dx6 and g2 = d/dx4 have no position component, and L_f phi =
        # v <grad phi, e> depends on neither x4 nor x6: k = 0, 1 entries vanish
        return ((0.0, 0.0, along), (0.0, 0.0, gain * normal))

    return LieDerivatives(
        pi=tuple(pj.pi),
        alpha=tuple(pj.s),
        lg_pi=lg(pj.grad_pi),
        lg_alpha=lg(pj.grad_s),
        grad_pi=tuple(pj.grad_pi),
        grad_alpha=tuple(pj.grad_s),
        speed=v,
        dist=pj.dist,
    )


def virtual_output(xbar, curve: Curve, delta_y: float | None = None):
    """``(pi, alpha)`` at the position of ``xbar``."""
    y = (xbar[0], xbar[1])
    return curve.project(y, delta_y), curve.s(y)


def decoupling_matrix(xbar, curve: Curve, params: CarParams, delta_y=None, lie: LieDerivatives | None = None) -> DecouplingMatrix:
    lie = lie or lie_derivatives(xbar, curve, params, delta_y)
    D = lie.decoupling
    det = float(D[0, 0] * D[1, 1] - D[0, 1] * D[1, 0])
    if abs(det) < SINGULAR_TOL:
        raise Singularity(f"det D = {det:.3g} (vrm + x5 = {lie.speed:.3g})")
    return DecouplingMatrix(D, det)


def cross_term(lie: LieDerivatives) -> float:
    """``d1 pi * d2 alpha - d2 pi * d1 alpha``, the factor in ``det D``."""
    gp, ga = lie.grad_pi, lie.grad_alpha
    return gp[0] * ga[1] - gp[1] * ga[0]


def det_closed_form(xbar, params: CarParams, lie: LieDerivatives) -> float:
    v = params.vrm + xbar[4]
    return v * v / (params.length * math.cos(xbar[3]) ** 2) * cross_term(lie)


def to_transverse(xbar, curve: Curve, params: CarParams, delta_y=None, lie: LieDerivatives | None = None) -> TransverseCoords:
    lie = lie or lie_derivatives(xbar, curve, params, delta_y)
    if lie.singular:
        raise Singularity(f"vrm + x5 = {lie.speed:.3g}: state excluded from the linearizable set")
    return TransverseCoords(tuple(lie.pi[:3]), tuple(lie.alpha[:3]))


def from_transverse_on_path(eta, curve: Curve, params: CarParams) -> np.ndarray:
    """Inverse of the transformation restricted to ``xi = 0``."""
    lam = eta[0]
    p = np.asarray(curve.sigma(lam))
    return np.array(
        [
            p[0],
            p[1],
            curve.tangent_angle(lam),
            math.atan(params.length * curve.signed_curvature(lam)),
            eta[1] - params.vrm,
            eta[2],
        ]
    )


def kappa_fb(xbar, curve: Curve, params: CarParams, v_par: float, v_perp: float, delta_y=None, lie: LieDerivatives | None = None) -> AuxInput:
    """Linearizing feedback: ``u = D^{-1} (-(L_f^3 pi, L_f^3 alpha) + (v_par, v_perp))``."""
    lie = lie or lie_derivatives(xbar, curve, params, delta_y)
    D, det = decoupling_matrix(xbar, curve, params, lie=lie)
    r1 = v_par - lie.pi[3]
    r2 = v_perp - lie.alpha[3]
    u1 = (D[1, 1] * r1 - D[0, 1] * r2) / det
    u2 = (-D[1, 0] * r1 + D[0, 0] * r2) / det
    return AuxInput(u1, u2)


def transverse_map(xbar, curve: Curve, params: CarParams) -> np.ndarray:
    """``T(xbar) = (eta1, eta2, eta3, xi1, xi2, xi3)`` as one array."""
    eta, xi = to_transverse(xbar, curve, params)
    return np.array([*eta, *xi])
