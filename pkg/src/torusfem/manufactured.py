"""Closed-form solution on the torus, derived loads, and error norms.

The reference solution is a smooth tangential field expressed in the
toroidal frame: with angles theta (around the tube) and phi (around the
axis) recovered from a point by

    phi = atan2(y, x),   theta = atan2(z, sqrt(x^2+y^2) - R),

the field is u = A e_theta + B e_phi with scalar amplitudes

    A = r sin(3 phi + theta) cos(phi),
    B = (R + r cos(theta)) cos(phi + 3 theta) sin(3 phi).

Both angles are constant along surface normals, so evaluating at the
angles of an off-surface point x gives the closest-point extension
u^e(x) = u(p(x)) for free; that is what the error norms and the load
derivation differentiate.

The load is not available in closed form anywhere; it is derived as
f = -P div_Gamma(X) with X the tangential derivative D u (standard form)
or the strain eps(u) (symmetric form).  On a closed surface this is the
exact strong form of the weak problem because the second index of X is
tangential, so no boundary or normal terms appear in the integration by
parts.  All derivatives are exact (nested forward-mode duals); the weak
form identity (f, v) = a(u, v) is enforced by tests before the load is
trusted.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .assembly import dof_map, _surface_gradients
from .meshing import ParametricMesh, _geometry_tables, mesh_parameter
from .refelem import basis_eval, quadrature_for

_ON_SURFACE_TOL = 1e-10
_BLOCK = 16384  # points per differentiation block; bounds dual temporaries

# quadrature degree for error norms: integrands are squared differences of
# order-k_u fields on curved cells
def _norm_degree(k_u):
    return 2 * k_u + 4


def _components(theta, phi, R, r):
    """Cartesian components of the field at toroidal angles.

    Written in the dispatch functions of the autodiff module, so the same
    code evaluates numpy arrays and (nested) duals.
    """
    A = r * ad.sin(3.0 * phi + theta) * ad.cos(phi)
    B = (R + r * ad.cos(theta)) * ad.cos(phi + 3.0 * theta) * ad.sin(3.0 * phi)
    sth, cth = ad.sin(theta), ad.cos(theta)
    sph, cph = ad.sin(phi), ad.cos(phi)
    ux = -A * sth * cph - B * sph
    uy = -A * sth * sph + B * cph
    uz = A * cth
    return ux, uy, uz


def _angles(x, y, z, R):
    d = ad.sqrt(x * x + y * y)
    return ad.atan2(z, d - R), ad.atan2(y, x)


class ExactSolution:
    """Evaluator of the reference tangential field and its extension."""

    def __init__(self, surface):
        self.surface = surface

    def __call__(self, x):
        """Field values at on-surface points; rejects points off Gamma."""
        x = np.asarray(x, dtype=float)
        rho = self.surface.signed_distance(x)
        if np.any(np.abs(rho) >= _ON_SURFACE_TOL):
            raise ValueError("point not on the surface (|rho| >= 1e-10)")
        return self.extension(x)

    def extension(self, x):
        """Closest-point extension u(p(x)); valid throughout the tube."""
        x = np.asarray(x, dtype=float)
        theta, phi = _angles(x[..., 0], x[..., 1], x[..., 2], self.surface.R)
        ux, uy, uz = _components(theta, phi, self.surface.R, self.surface.r)
        return np.stack((ux, uy, uz), axis=-1)

    def extension_gradient(self, x):
        """Ambient Jacobian G[..., a, b] = d u^e_a / d x_b, exact."""
        x = np.asarray(x, dtype=float)
        X, Y, Z = ad.gradient_variables(x[..., 0], x[..., 1], x[..., 2])
        theta, phi = _angles(X, Y, Z, self.surface.R)
        comps = _components(theta, phi, self.surface.R, self.surface.r)
        return np.stack([ad.gradient(c) for c in comps], axis=-2)


def exact_solution(surface, x):
    """Reference field at on-surface points x."""
    return ExactSolution(surface)(x)


def exact_load(surface, x, kind="standard"):
    """Load field f = -P div_Gamma(X) at on-surface points x.

    X = D u for the standard form, eps(u) for the symmetric one.  First
    and second derivatives of u^e are exact nested duals; the projector
    derivative is the closed form dP = -(kappa n^T + n kappa) from the
    curvature tensor, so nothing is finite-differenced.
    """
    if kind not in ("standard", "symmetric"):
        raise ValueError("kind must be 'standard' or 'symmetric'")
    x = np.asarray(x, dtype=float)
    rho = surface.signed_distance(x)
    if np.any(np.abs(rho) >= _ON_SURFACE_TOL):
        raise ValueError("point not on the surface (|rho| >= 1e-10)")
    flat = x.reshape(-1, 3)
    out = np.empty_like(flat)
    for lo in range(0, len(flat), _BLOCK):
        out[lo : lo + _BLOCK] = _load_block(surface, flat[lo : lo + _BLOCK], kind)
    return out.reshape(x.shape)


def _load_block(surface, x, kind):
    X, Y, Z = ad.hessian_variables(x[:, 0], x[:, 1], x[:, 2])
    theta, phi = _angles(X, Y, Z, surface.R)
    comps = _components(theta, phi, surface.R, surface.r)
    G = np.stack([ad.gradient(c) for c in comps], axis=-2)
    H = np.stack([ad.hessian(c) for c in comps], axis=-3)
    n = surface.normal(x)
    kap = surface.curvature_tensor(x)
    P = surface.tangent_projection(x)
    # dP[l,j,k] = d_k (I - n n^T)_lj with grad n = kappa
    dP = -(
        kap[:, :, None, :] * n[:, None, :, None]
        + n[:, :, None, None] * kap[:, None, :, :]
    )
    dT = (
        np.einsum("nlak,nab,nbj->nljk", dP, G, P)
        + np.einsum("nla,nabk,nbj->nljk", P, H, P)
        + np.einsum("nla,nab,nbjk->nljk", P, G, dP)
    )
    if kind == "symmetric":
        dT = 0.5 * (dT + dT.transpose(0, 2, 1, 3))
    return -np.einsum("nil,njk,nljk->ni", P, P, dT)


def load_field(surface, kind="standard"):
    """Point evaluator of the load, for assembly and the driver."""

    def field(points):
        return exact_load(surface, points, kind)

    return field


# ____________________________________________________________ error norms


def _check_coeffs(mesh, k_u, coeffs):
    dof = dof_map(mesh, k_u)
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.size != dof.ndofs:
        raise ValueError("coefficient vector does not match the dof map")
    return dof, coeffs.reshape(dof.n_nodes, 3)


def l2_error(mesh, k_u, coeffs, exact):
    """L2(Gamma_h) distance between the discrete field and the reference.

    The reference is evaluated through the closest-point extension at the
    quadrature points of the discrete surface; a coefficient vector may
    be passed instead to measure a discrete-discrete distance.
    """
    dof, cf = _check_coeffs(mesh, k_u, coeffs)
    discrete_ref = not hasattr(exact, "extension")
    if discrete_ref:
        _, cf_ref = _check_coeffs(mesh, k_u, exact)
    rule = quadrature_for(_norm_degree(k_u))
    vals, _ = basis_eval(k_u, rule[0])
    acc = 0.0
    for lo in range(0, mesh.n_cells, 4096):
        cells = np.arange(lo, min(lo + 4096, mesh.n_cells))
        x, _, _, af, _ = _geometry_tables(mesh, rule, cells=cells)
        waf = rule[1][None, :] * af
        conn = dof.cells[cells]
        uh = np.einsum("qM,cMa->cqa", vals, cf[conn])
        ue = (
            np.einsum("qM,cMa->cqa", vals, cf_ref[conn])
            if discrete_ref
            else exact.extension(x)
        )
        acc += np.sum(waf * np.sum((ue - uh) ** 2, axis=-1))
    return float(np.sqrt(acc))


def energy_error_terms(mesh, k_u, coeffs, exact):
    """Squared energy-error parts: (tangential-derivative, penalty-weight).

    The second term carries the h^-2 weight of the energy norm.  Both the
    discrete and the reference derivative are projected with the discrete
    P_h on both sides, matching the norm in which stability holds.
    """
    dof, cf = _check_coeffs(mesh, k_u, coeffs)
    discrete_ref = not hasattr(exact, "extension")
    if discrete_ref:
        _, cf_ref = _check_coeffs(mesh, k_u, exact)
    rule = quadrature_for(_norm_degree(k_u))
    h = mesh_parameter(mesh)
    grad_sq = 0.0
    pen_sq = 0.0
    for lo in range(0, mesh.n_cells, 4096):
        cells = np.arange(lo, min(lo + 4096, mesh.n_cells))
        x, n_h, waf, g, Phi = _surface_gradients(mesh, rule, k_u, cells)
        conn = dof.cells[cells]
        uh = np.einsum("qM,cMa->cqa", Phi, cf[conn])
        Gh = np.einsum("cqMd,cMa->cqad", g, cf[conn])
        if discrete_ref:
            ue = np.einsum("qM,cMa->cqa", Phi, cf_ref[conn])
            Ge = np.einsum("cqMd,cMa->cqad", g, cf_ref[conn])
        else:
            ue = exact.extension(x)
            Ge = exact.extension_gradient(x)
        diff = Ge - Gh
        P_h = np.eye(3) - n_h[..., :, None] * n_h[..., None, :]
        D = np.einsum("cqab,cqbe,cqef->cqaf", P_h, diff, P_h)
        grad_sq += np.sum(waf * np.sum(D * D, axis=(-2, -1)))
        ndot = np.einsum("cqa,cqa->cq", n_h, ue - uh)
        pen_sq += np.sum(waf * ndot**2)
    return float(grad_sq), float(pen_sq / h**2)


def energy_error(mesh, k_u, coeffs, exact):
    """Discrete energy norm of the error: tangential derivative plus
    h^-2-weighted normal component, both on Gamma_h."""
    a, b = energy_error_terms(mesh, k_u, coeffs, exact)
    return float(np.sqrt(a + b))


def nodal_interpolant(mesh, k_u, field) -> np.ndarray:
    """Coefficients of the nodal interpolant of a point evaluator."""
    dof = dof_map(mesh, k_u)
    return np.asarray(field(dof.node_xyz), dtype=float).ravel()
