"""Exact geometry of a torus embedded in R^3.

The surface is the zero level set of

    rho(x) = sqrt((sqrt(x0^2 + x1^2) - R)^2 + x2^2) - r,

the torus with centreline radius ``R``, tube radius ``r`` and axis along
e_z.  Everything the solver needs from the exact surface is available in
closed form inside the tube ``|rho| < r``: signed distance, closest point
projection, unit normal, tangential projector, the shape operator (extended
off the surface through the closest point map), and the area distortion of
the projection between a discrete surface and the exact one.

All evaluators are vectorised over leading axes; points are ``(..., 3)``
arrays.
"""

from __future__ import annotations

import numpy as np

# Points closer than this to the axis or the centreline circle have no
# well defined closest point.
_SINGULAR_TOL = 1e-12


class TorusSurface:
    """Torus of centreline radius R and tube radius r about the z-axis."""

    def __init__(self, R: float = 1.0, r: float = 0.6):
        if not 0.0 < r < R:
            raise ValueError("torus needs 0 < r < R")
        self.R = float(R)
        self.r = float(r)

    def _frame(self, x, need_direction=True):
        """Cylindrical/tube angles and distances at points x.

        Returns (d, q, cphi, sphi, cth, sth) with d the distance to the
        axis, q the distance to the centreline circle (= rho + r), phi the
        angle around the axis and theta the angle around the tube.  Both
        angles are constant along the normal segment through x, so the
        same frame serves x and its closest point.  Points on the
        centreline circle still have a distance but no tube angle; they
        are rejected only when the direction is required.
        """
        x = np.asarray(x, dtype=float)
        d = np.hypot(x[..., 0], x[..., 1])
        if np.any(d < _SINGULAR_TOL):
            raise ValueError("point on torus axis, closest point ambiguous")
        cphi = x[..., 0] / d
        sphi = x[..., 1] / d
        wd = d - self.R
        q = np.hypot(wd, x[..., 2])
        if not need_direction:
            return d, q, cphi, sphi, None, None
        if np.any(q < _SINGULAR_TOL):
            raise ValueError("closest point not unique")
        cth = wd / q
        sth = x[..., 2] / q
        return d, q, cphi, sphi, cth, sth

    def signed_distance(self, x):
        """rho(x), negative inside the tube."""
        _, q, _, _, _, _ = self._frame(x, need_direction=False)
        return q - self.r

    def closest_point(self, x):
        """Projection p(x) onto the surface along the normal direction."""
        _, _, cphi, sphi, cth, sth = self._frame(x)
        ring = self.R + self.r * cth
        p = np.empty(np.broadcast(cth).shape + (3,))
        p[..., 0] = ring * cphi
        p[..., 1] = ring * sphi
        p[..., 2] = self.r * sth
        return p

    def normal(self, x):
        """Outward unit normal, equal to grad rho; constant along normals."""
        _, _, cphi, sphi, cth, sth = self._frame(x)
        n = np.empty(np.broadcast(cth).shape + (3,))
        n[..., 0] = cth * cphi
        n[..., 1] = cth * sphi
        n[..., 2] = sth
        return n

    def tangent_projection(self, x):
        """P(x) = I - n n^T, projector onto the tangent plane at p(x)."""
        n = self.normal(x)
        eye = np.eye(3)
        return eye - n[..., :, None] * n[..., None, :]

    def curvature_tensor(self, x):
        """Shape operator extended off the surface.

        At x with signed distance rho the tensor is

            kappa(x) = sum_i kappa_i / (1 + rho kappa_i) a_i a_i^T

        with principal curvatures and directions taken at p(x).  For the
        torus the scaled curvatures collapse to 1/q around the tube and
        cos(theta)/d around the axis, q and d being the distances to the
        centreline circle and to the axis.
        """
        d, q, cphi, sphi, cth, sth = self._frame(x)
        shape = np.broadcast(cth).shape
        a1 = np.empty(shape + (3,))
        a1[..., 0] = -sth * cphi
        a1[..., 1] = -sth * sphi
        a1[..., 2] = cth
        a2 = np.empty(shape + (3,))
        a2[..., 0] = -sphi
        a2[..., 1] = cphi
        a2[..., 2] = 0.0
        k1 = (1.0 / q)[..., None, None]
        k2 = (cth / d)[..., None, None]
        return (k1 * a1[..., :, None] * a1[..., None, :]
                + k2 * a2[..., :, None] * a2[..., None, :])

    def distortion(self, x_h, n_h):
        """Derivative of the closest point map between tangent planes.

        ``x_h`` are points on a discrete surface with unit normals ``n_h``.
        Returns the tensor B = P (I - rho kappa) P_h and the area change
        |B| of the map restricted to the plane orthogonal to n_h.  |B| is
        the factor converting surface measure on the discrete surface to
        surface measure on the exact one.
        """
        x_h = np.asarray(x_h, dtype=float)
        n_h = np.asarray(n_h, dtype=float)
        rho = self.signed_distance(x_h)
        kap = self.curvature_tensor(x_h)
        P = self.tangent_projection(x_h)
        eye = np.eye(3)
        P_h = eye - n_h[..., :, None] * n_h[..., None, :]
        core = eye - rho[..., None, None] * kap
        B = P @ core @ P_h
        t1, t2 = _tangent_pair(n_h)
        bt1 = np.einsum("...ij,...j->...i", B, t1)
        bt2 = np.einsum("...ij,...j->...i", B, t2)
        area = np.linalg.norm(np.cross(bt1, bt2), axis=-1)
        if np.any(area <= 1e-12):
            raise ValueError("degenerate mapping")
        return B, area


def _tangent_pair(n):
    """Orthonormal pair spanning the plane orthogonal to unit vectors n."""
    n = np.asarray(n, dtype=float)
    seed = np.zeros_like(n)
    near_z = np.abs(n[..., 2]) > 0.9
    seed[..., 2] = 1.0
    seed[near_z] = (1.0, 0.0, 0.0)
    t1 = np.cross(seed, n)
    t1 /= np.linalg.norm(t1, axis=-1, keepdims=True)
    t2 = np.cross(n, t1)
    return t1, t2


def killing_field(surface):
    """Tangential isometry field of the torus, as a point evaluator.

    Rotation about the symmetry axis is the only continuous isometry a
    torus of revolution admits, so its generator x -> (-y, x, 0) spans the
    kernel of the symmetric-gradient form.  The axis is e_z by
    construction of :class:`TorusSurface`.
    """
    if not isinstance(surface, TorusSurface):
        raise TypeError("killing_field needs a TorusSurface")

    def field(points):
        points = np.asarray(points, dtype=float)
        k = np.empty_like(points)
        k[..., 0] = -points[..., 1]
        k[..., 1] = points[..., 0]
        k[..., 2] = 0.0
        return k

    return field
