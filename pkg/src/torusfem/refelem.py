"""Reference triangle: Lagrange lattices, nodal bases, quadrature rules.

The reference cell is the unit triangle {(xi, eta): xi, eta >= 0,
xi + eta <= 1}.  Nodes of the degree-k Lagrange element sit on the
uniform lattice (i/k, j/k) and are ordered vertices first, then edge
interiors edge by edge, then cell interiors; this ordering is the contract
shared with the mesh connectivity.

Quadrature rules up to degree 5 are classic symmetric triangle schemes
(Zienkiewicz/Taylor and Strang/Fix point sets); higher degrees use a
tensor Gauss-Legendre rule collapsed onto the triangle, which keeps all
weights positive at every degree.
"""

from __future__ import annotations

import numpy as np

# vertices and the directed edges between them, fixing lattice order
_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
_EDGES = ((0, 1), (1, 2), (2, 0))

MAX_QUAD_DEGREE = 14


def lagrange_lattice(k: int) -> np.ndarray:
    """Nodes of the degree-k lattice in canonical order, shape (L, 2)."""
    if not 1 <= int(k) <= 4:
        raise ValueError("lattice degree must be in 1..4")
    k = int(k)
    pts = [v for v in _VERTICES]
    for a, b in _EDGES:
        va, vb = _VERTICES[a], _VERTICES[b]
        for s in range(1, k):
            pts.append(va + (s / k) * (vb - va))
    for j in range(1, k):
        for i in range(1, k - j):
            pts.append(np.array([i / k, j / k]))
    return np.array(pts)


def lattice_size(k: int) -> int:
    return (k + 1) * (k + 2) // 2


def _monomial_exponents(k):
    return [(t - b, b) for t in range(k + 1) for b in range(t + 1)]


_coeff_cache: dict[int, np.ndarray] = {}


def _coefficients(k):
    """Coefficients of the nodal basis in the monomial basis."""
    if k not in _coeff_cache:
        nodes = lagrange_lattice(k)
        expo = _monomial_exponents(k)
        V = np.empty((len(nodes), len(expo)))
        for t, (a, b) in enumerate(expo):
            V[:, t] = nodes[:, 0] ** a * nodes[:, 1] ** b
        _coeff_cache[k] = np.linalg.inv(V)
    return _coeff_cache[k]


def basis_eval(degree: int, points) -> tuple[np.ndarray, np.ndarray]:
    """Nodal basis values and reference gradients at points (Q, 2).

    Returns (vals, grads) with shapes (Q, L) and (Q, L, 2), L the lattice
    size.  Functions are ordered like :func:`lagrange_lattice`.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError("reference points must have shape (Q, 2)")
    C = _coefficients(int(degree))
    expo = _monomial_exponents(int(degree))
    xi, eta = points[:, 0], points[:, 1]
    M = np.empty((len(points), len(expo)))
    dMx = np.zeros_like(M)
    dMy = np.zeros_like(M)
    for t, (a, b) in enumerate(expo):
        M[:, t] = xi**a * eta**b
        if a > 0:
            dMx[:, t] = a * xi ** (a - 1) * eta**b
        if b > 0:
            dMy[:, t] = b * xi**a * eta ** (b - 1)
    vals = M @ C
    grads = np.stack((dMx @ C, dMy @ C), axis=-1)
    return vals, grads


def quadrature_for(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Points and weights of a rule exact for polynomials of `degree`.

    All weights are positive and sum to the reference area 1/2.
    """
    degree = int(degree)
    if not 1 <= degree <= MAX_QUAD_DEGREE:
        raise ValueError("quadrature degree must be in 1..14")
    if degree == 1:
        x = np.array([[1.0 / 3.0, 1.0 / 3.0]])
        w = np.array([0.5])
    elif degree == 2:
        x = np.array([[1.0 / 6.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0], [2.0 / 3.0, 1.0 / 6.0]])
        w = np.full(3, 1.0 / 6.0)
    elif degree == 3:
        x = np.array(
            [
                [0.659027622374092, 0.231933368553031],
                [0.659027622374092, 0.109039009072877],
                [0.231933368553031, 0.659027622374092],
                [0.231933368553031, 0.109039009072877],
                [0.109039009072877, 0.659027622374092],
                [0.109039009072877, 0.231933368553031],
            ]
        )
        w = np.full(6, 1.0 / 12.0)
    elif degree == 4:
        x = np.array(
            [
                [0.816847572980459, 0.091576213509771],
                [0.091576213509771, 0.816847572980459],
                [0.091576213509771, 0.091576213509771],
                [0.108103018168070, 0.445948490915965],
                [0.445948490915965, 0.108103018168070],
                [0.445948490915965, 0.445948490915965],
            ]
        )
        w = np.array([0.109951743655322] * 3 + [0.223381589678011] * 3) / 2.0
    elif degree == 5:
        x = np.array(
            [
                [0.33333333333333333, 0.33333333333333333],
                [0.79742698535308720, 0.10128650732345633],
                [0.10128650732345633, 0.79742698535308720],
                [0.10128650732345633, 0.10128650732345633],
                [0.05971587178976981, 0.47014206410511505],
                [0.47014206410511505, 0.05971587178976981],
                [0.47014206410511505, 0.47014206410511505],
            ]
        )
        w = np.array(
            [0.225] + [0.12593918054482717] * 3 + [0.13239415278850616] * 3
        ) / 2.0
    else:
        x, w = _collapsed_gauss(degree)
    return x, w


def _collapsed_gauss(degree):
    """Gauss-Legendre square rule mapped to the triangle.

    Under (a, b) -> (a, b(1-a)) the monomial xi^p eta^q picks up a factor
    (1-a)^(q+1), so exactness for total degree d needs d+1 in a and d in b.
    """
    na = (degree + 3) // 2
    nb = (degree + 2) // 2
    xa, wa = np.polynomial.legendre.leggauss(na)
    xb, wb = np.polynomial.legendre.leggauss(nb)
    xa, wa = 0.5 * (xa + 1.0), 0.5 * wa
    xb, wb = 0.5 * (xb + 1.0), 0.5 * wb
    A, B = np.meshgrid(xa, xb, indexing="ij")
    WA, WB = np.meshgrid(wa, wb, indexing="ij")
    pts = np.stack((A.ravel(), (B * (1.0 - A)).ravel()), axis=-1)
    w = (WA * WB * (1.0 - A)).ravel()
    return pts, w
