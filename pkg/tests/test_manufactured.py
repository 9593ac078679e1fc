"""Tests for the reference solution, the derived loads and the error norms.

The solution is pinned by hand-substituted values and its tangentiality
invariant; the loads by the integration-by-parts identity (f, v) = a(u, v)
against smooth tangential test fields, integrated over the exact surface
with the measure-corrected oracle quadrature, which is itself checked
against the analytic torus area.  Differentiation is cross-checked with
central differences.  The error norms are pinned by self-distances, the
norm of the solution as a regression value, and interpolation/convergence
orders.
"""

import numpy as np
import numpy.testing as npt
import pytest
from oracles import surface_integral, tangential_test_fields, weak_form_residuals

from torusfem.assembly import assemble, cg_solve, dof_map
from torusfem.geometry import TorusSurface, killing_field
from torusfem.manufactured import (
    ExactSolution,
    energy_error,
    energy_error_terms,
    exact_load,
    exact_solution,
    l2_error,
    load_field,
    nodal_interpolant,
)
from torusfem.meshing import ParametricMesh, build_torus_mesh, elevate_geometry

SURF = TorusSurface()
EXACT = ExactSolution(SURF)


def torus_mesh(n, k_g):
    return elevate_geometry(build_torus_mesh(SURF, n, n), k_g, SURF)


def surface_points(count, seed):
    rng = np.random.default_rng(seed)
    th = rng.uniform(0.0, 2.0 * np.pi, count)
    ph = rng.uniform(0.0, 2.0 * np.pi, count)
    d = SURF.R + SURF.r * np.cos(th)
    return np.stack([d * np.cos(ph), d * np.sin(ph), SURF.r * np.sin(th)], axis=-1)


class TestExactSolution:
    def test_outer_equator_point_vanishes(self):
        # theta = phi = 0: every term carries a vanishing sine
        npt.assert_allclose(exact_solution(SURF, [1.6, 0.0, 0.0]), 0.0, atol=1e-15)

    def test_tube_top_point(self):
        # theta = pi/2, phi = 0: only the first amplitude survives
        u = exact_solution(SURF, [1.0, 0.0, 0.6])
        npt.assert_allclose(u, [-0.6, 0.0, 0.0], atol=1e-14)
        assert abs(u @ np.array([0.0, 0.0, 1.0])) < 1e-14  # n = e_z there

    def test_tangential_at_random_points(self):
        x = surface_points(10_000, 1)
        u = EXACT(x)
        n = SURF.normal(x)
        assert np.abs(np.einsum("qa,qa->q", u, n)).max() < 1e-12

    def test_rejects_off_surface_points(self):
        with pytest.raises(ValueError, match="not on the surface"):
            EXACT(np.array([1.7, 0.0, 0.0]))

    def test_extension_constant_along_normals(self):
        x = surface_points(50, 2)
        n = SURF.normal(x)
        npt.assert_allclose(
            EXACT.extension(x + 0.1 * n), EXACT.extension(x), atol=1e-13
        )

    def test_gradient_matches_central_differences(self):
        # off-surface tube points; exact duals vs step 1e-5 differences
        rng = np.random.default_rng(3)
        th = rng.uniform(0.0, 2.0 * np.pi, 100)
        ph = rng.uniform(0.0, 2.0 * np.pi, 100)
        rad = rng.uniform(0.3, 0.85, 100)
        d = SURF.R + rad * np.cos(th)
        x = np.stack([d * np.cos(ph), d * np.sin(ph), rad * np.sin(th)], axis=-1)
        G = EXACT.extension_gradient(x)
        step = 1e-5
        for b in range(3):
            e = np.zeros(3)
            e[b] = step
            fd = (EXACT.extension(x + e) - EXACT.extension(x - e)) / (2.0 * step)
            npt.assert_allclose(G[..., :, b], fd, atol=1e-7)


class TestExactLoad:
    def test_tangential_at_random_points(self):
        x = surface_points(10_000, 4)
        n = SURF.normal(x)
        for kind in ("standard", "symmetric"):
            f = exact_load(SURF, x, kind)
            assert np.abs(np.einsum("qa,qa->q", f, n)).max() < 1e-10

    def test_outer_equator_tangential(self):
        f = exact_load(SURF, np.array([1.6, 0.0, 0.0]))
        assert abs(f @ np.array([1.0, 0.0, 0.0])) < 1e-10

    def test_kinds_differ(self):
        x = surface_points(100, 5)
        gap = np.abs(exact_load(SURF, x, "standard") - exact_load(SURF, x, "symmetric"))
        assert gap.max() > 1.0  # measured ~20 at peak

    def test_kind_guard(self):
        with pytest.raises(ValueError, match="kind"):
            exact_load(SURF, np.array([1.6, 0.0, 0.0]), "mixed")

    def test_rejects_off_surface_points(self):
        with pytest.raises(ValueError, match="not on the surface"):
            exact_load(SURF, np.array([1.0, 0.0, 0.0]))

    def test_weak_form_identity_both_kinds(self):
        # primary load oracle: integration by parts on the closed surface
        m = torus_mesh(16, 3)
        fields = tangential_test_fields(SURF, 4, 11)
        for kind in ("standard", "symmetric"):
            res = weak_form_residuals(m, 12, EXACT, load_field(SURF, kind), kind, fields)
            assert max(res) < 1e-8  # measured <= 2e-10

    def test_symmetric_load_orthogonal_to_killing_field(self):
        # solvability of the symmetric problem: data must annihilate the
        # rotation field; measured ~1e-17
        m = torus_mesh(32, 3)
        k = killing_field(SURF)
        f = load_field(SURF, "symmetric")
        num = abs(surface_integral(m, 12, lambda y: np.einsum("qa,qa->q", f(y), k(y))))
        nf = np.sqrt(surface_integral(m, 12, lambda y: np.einsum("qa,qa->q", f(y), f(y))))
        nk = np.sqrt(surface_integral(m, 12, lambda y: np.einsum("qa,qa->q", k(y), k(y))))
        assert num / (nf * nk) < 1e-6


class TestOracleQuadrature:
    def test_reproduces_torus_area(self):
        m = torus_mesh(16, 4)
        area = surface_integral(m, 12, lambda y: np.ones(len(y)))
        npt.assert_allclose(area, 4.0 * np.pi**2 * SURF.R * SURF.r, atol=1e-10)


class TestL2Error:
    def test_self_distance_is_zero(self):
        m = torus_mesh(8, 2)
        c = nodal_interpolant(m, 1, EXACT.extension)
        assert l2_error(m, 1, c, c) == 0.0

    def test_coefficient_size_guard(self):
        m = torus_mesh(8, 2)
        with pytest.raises(ValueError, match="dof map"):
            l2_error(m, 1, np.zeros(7), EXACT)

    def test_zero_coefficients_give_solution_norm(self):
        # regression: ||u||_L2(Gamma_h) ~ 3.354, stable to 3 digits
        norms = []
        for n in (16, 32):
            m = torus_mesh(n, 2)
            norms.append(l2_error(m, 1, np.zeros(dof_map(m, 1).ndofs), EXACT))
        npt.assert_allclose(norms, 3.354, atol=2e-3)

    @pytest.mark.parametrize("k_u,k_g", [(1, 2), (2, 3)])
    def test_interpolant_converges_at_optimal_order(self, k_u, k_g):
        errs = []
        for n in (16, 32, 64):
            m = torus_mesh(n, k_g)
            errs.append(l2_error(m, k_u, nodal_interpolant(m, k_u, EXACT.extension), EXACT))
        order = np.log2(errs[-2] / errs[-1])
        assert abs(order - (k_u + 1)) < 0.3  # measured 1.95 / 2.97


class TestEnergyError:
    def test_self_distance_is_zero(self):
        m = torus_mesh(8, 2)
        c = nodal_interpolant(m, 1, EXACT.extension)
        assert energy_error(m, 1, c, c) == 0.0

    def test_tangential_error_field_has_no_penalty_part(self):
        # flat cell, n_h = e_z: in-plane error fields are in the kernel of
        # the weighted normal term
        nodes = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        m = ParametricMesh(1, nodes, [[0, 1, 2]])
        rng = np.random.default_rng(6)
        a = rng.standard_normal((3, 3))
        b = rng.standard_normal((3, 3))
        a[:, 2] = 0.0
        b[:, 2] = 0.0
        grad_sq, pen_sq = energy_error_terms(m, 1, a.ravel(), b.ravel())
        assert grad_sq > 0.0
        assert pen_sq < 1e-10 * (grad_sq + pen_sq)

    def test_discrete_solution_converges_at_order_one(self):
        f = load_field(SURF, "standard")
        errs = []
        for n in (16, 32, 64):
            m = torus_mesh(n, 2)
            sys_ = assemble(m, 1, "standard", 100.0, f)
            x, _ = cg_solve(sys_.A, sys_.b)
            errs.append(energy_error(m, 1, x, EXACT))
        order = np.log2(errs[-2] / errs[-1])
        assert abs(order - 1.0) < 0.3  # measured 0.96
