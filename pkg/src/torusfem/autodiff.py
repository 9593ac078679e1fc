"""Forward-mode derivatives with respect to the ambient coordinates.

A :class:`Dual` carries a value and its three partial derivatives.  The
slots accept numpy arrays, so whole point batches differentiate at once,
and they accept other :class:`Dual` instances, so nesting two levels
yields exact Hessians.  Only the operations the closed-form fields need
are provided: ring arithmetic, sqrt, sin, cos and atan2.

Typical use::

    x, y, z = hessian_variables(px, py, pz)
    f = sin(x * y) / sqrt(x * x + y * y)
    value(f), gradient(f), hessian(f)

Derivatives are exact up to roundoff; there is no step-size parameter.
"""

from __future__ import annotations

import numpy as np


class Dual:
    """Value together with its three ambient partial derivatives."""

    __slots__ = ("v", "dx", "dy", "dz")

    def __init__(self, v, dx=0.0, dy=0.0, dz=0.0):
        self.v = v
        self.dx = dx
        self.dy = dy
        self.dz = dz

    def __repr__(self):
        return f"Dual({self.v!r})"

    def __add__(self, other):
        ov, ox, oy, oz = _parts(other)
        return Dual(self.v + ov, self.dx + ox, self.dy + oy, self.dz + oz)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.v, -self.dx, -self.dy, -self.dz)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        ov, ox, oy, oz = _parts(other)
        return Dual(
            self.v * ov,
            self.dx * ov + self.v * ox,
            self.dy * ov + self.v * oy,
            self.dz * ov + self.v * oz,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        ov, ox, oy, oz = _parts(other)
        v = self.v / ov
        return Dual(
            v,
            (self.dx - v * ox) / ov,
            (self.dy - v * oy) / ov,
            (self.dz - v * oz) / ov,
        )

    def __rtruediv__(self, other):
        ov, ox, oy, oz = _parts(other)
        v = ov / self.v
        return Dual(
            v,
            (ox - v * self.dx) / self.v,
            (oy - v * self.dy) / self.v,
            (oz - v * self.dz) / self.v,
        )


def _parts(u):
    if isinstance(u, Dual):
        return u.v, u.dx, u.dy, u.dz
    return u, 0.0, 0.0, 0.0


def sqrt(u):
    if isinstance(u, Dual):
        s = sqrt(u.v)
        g = 0.5 / s
        return Dual(s, g * u.dx, g * u.dy, g * u.dz)
    return np.sqrt(u)


def sin(u):
    if isinstance(u, Dual):
        c = cos(u.v)
        return Dual(sin(u.v), c * u.dx, c * u.dy, c * u.dz)
    return np.sin(u)


def cos(u):
    if isinstance(u, Dual):
        ms = -sin(u.v)
        return Dual(cos(u.v), ms * u.dx, ms * u.dy, ms * u.dz)
    return np.cos(u)


def atan2(b, a):
    """Two-argument arctangent; smooth away from the origin, so the
    branch cut of the angle never enters the derivative."""
    if isinstance(b, Dual) or isinstance(a, Dual):
        bv, bx, by, bz = _parts(b)
        av, ax, ay, az = _parts(a)
        s = av * av + bv * bv
        return Dual(
            atan2(bv, av),
            (av * bx - bv * ax) / s,
            (av * by - bv * ay) / s,
            (av * bz - bv * az) / s,
        )
    return np.arctan2(b, a)


def gradient_variables(x, y, z):
    """Seed one derivative level at points (x, y, z)."""
    return Dual(x, 1.0, 0.0, 0.0), Dual(y, 0.0, 1.0, 0.0), Dual(z, 0.0, 0.0, 1.0)


def hessian_variables(x, y, z):
    """Seed two derivative levels, for second derivatives."""
    xi, yi, zi = gradient_variables(x, y, z)
    return Dual(xi, 1.0, 0.0, 0.0), Dual(yi, 0.0, 1.0, 0.0), Dual(zi, 0.0, 0.0, 1.0)


def value(u):
    """Plain value, with every derivative level peeled off."""
    while isinstance(u, Dual):
        u = u.v
    return u


def _as_full(part, shape):
    a = np.asarray(value(part), dtype=float)
    if a.shape != shape:
        a = np.broadcast_to(a, shape)
    return a


def gradient(u):
    """Gradient stack (..., 3) from the outermost derivative level."""
    shape = np.shape(value(u))
    return np.stack([_as_full(p, shape) for p in (u.dx, u.dy, u.dz)], axis=-1)


def hessian(u):
    """Second derivatives (..., 3, 3) of a twice-seeded expression."""
    shape = np.shape(value(u))
    rows = []
    for p in (u.dx, u.dy, u.dz):
        _, px, py, pz = _parts(p)
        rows.append(np.stack([_as_full(q, shape) for q in (px, py, pz)], axis=-1))
    return np.stack(rows, axis=-2)
