"""Third-order jets of scalar signals.

A jet is a 4-tuple ``(a, a', a'', a''')`` holding the value and first three
time derivatives of a signal at one instant. Jets are what the Lie derivative
code pushes through nonlinear maps: if ``y(t)`` is the position of the car
under the drift vector field, then the jet of ``phi(y(t))`` at ``t = 0`` is
``(phi, L_f phi, L_f^2 phi, L_f^3 phi)``.

Components may be Python floats or numpy arrays of a common shape.
"""

ZERO = (0.0, 0.0, 0.0, 0.0)


def const(c):
    return (c, 0.0, 0.0, 0.0)


def add(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3])


def sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3])


def scale(c, a):
    return (c * a[0], c * a[1], c * a[2], c * a[3])


def mul(a, b):
    """Leibniz rule up to third order."""
    return (
        a[0] * b[0],
        a[1] * b[0] + a[0] * b[1],
        a[2] * b[0] + 2.0 * a[1] * b[1] + a[0] * b[2],
        a[3] * b[0] + 3.0 * a[2] * b[1] + 3.0 * a[1] * b[2] + a[0] * b[3],
    )


def compose(f, a):
    """Jet of ``F(a(t))`` given ``f = (F, F', F'', F''')`` evaluated at ``a[0]``.

    Faa di Bruno's formula truncated at third order.
    """
    a1, a2, a3 = a[1], a[2], a[3]
    return (
        f[0],
        f[1] * a1,
        f[2] * a1 * a1 + f[1] * a2,
        f[3] * a1 * a1 * a1 + 3.0 * f[2] * a1 * a2 + f[1] * a3,
    )
