"""Acceptance gate: ten go/no-go checks of the torus studies.

Every check re-runs the solves it judges and prints one PASS/FAIL line
with the measured numbers before asserting, so a full run leaves a
readable scorecard (run with -s to see it live).  Studies are memoized
per configuration and shared between criteria.  The whole gate is a
compute job, not a unit suite: expect 15 to 30 minutes on one core,
dominated by the fine-mesh kernel estimation and the degree-14 load
oracle.
"""

import contextlib
import io
import re
from functools import lru_cache

import numpy as np

from torusfem.assembly import (
    KERNEL_THRESHOLD,
    assemble,
    cg_solve,
    killing_interpolant,
    numerical_kernel,
)
from torusfem.cli import RunConfig, _level_records, main
from torusfem.geometry import TorusSurface
from torusfem.manufactured import ExactSolution, exact_load, l2_error, load_field
from torusfem.meshing import build_torus_mesh, elevate_geometry

from oracles import tangential_test_fields, weak_form_residuals

SURF = TorusSurface(1.0, 0.6)


def _report(num, ok, detail):
    line = f"criterion {num:02d} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line, flush=True)
    assert ok, line


@lru_cache(maxsize=None)
def _study(formulation, k_u, k_g, amplitude=0.0, normal_source="discrete"):
    cfg = RunConfig(
        formulation=formulation,
        k_u=k_u,
        k_g=k_g,
        levels=4,
        n_major=16,
        n_minor=16,
        amplitude=amplitude,
        normal_source=normal_source,
    )
    return tuple(_level_records(cfg))


@lru_cache(maxsize=None)
def _finest_l2(beta):
    """L2 error of the finest (1,2) mesh of the study ladder at this beta."""
    if beta == 100.0:
        return _study("standard", 1, 2)[-1].l2_error
    mesh = elevate_geometry(build_torus_mesh(SURF, 128, 128), 2, SURF)
    system = assemble(mesh, 1, "standard", beta=beta, f=load_field(SURF, "standard"))
    x, _ = cg_solve(system.A, system.b, rel_tol=1e-10)
    return l2_error(mesh, 1, x, ExactSolution(SURF))


def test_criterion_01_l2_rate_optimal_geometry():
    r12 = _study("standard", 1, 2)[-1].l2_rate
    r23 = _study("standard", 2, 3)[-1].l2_rate
    ok = abs(r12 - 2.0) <= 0.3 and abs(r23 - 3.0) <= 0.3
    _report(1, ok, f"final L2 rates (1,2) {r12:.3f} vs 2+-0.3, (2,3) {r23:.3f} vs 3+-0.3")


def test_criterion_02_l2_stall_equal_orders():
    r22 = _study("standard", 2, 2)[-1].l2_rate
    e22 = _study("standard", 2, 2)[-1].l2_error
    e23 = _study("standard", 2, 3)[-1].l2_error
    sep = e22 / e23
    ok = abs(r22 - 2.0) <= 0.3 and sep >= 5.0
    _report(
        2,
        ok,
        f"(2,2) final L2 rate {r22:.3f} vs 2+-0.3, "
        f"error {sep:.2f}x the (2,3) error vs >= 5x",
    )


def test_criterion_03_energy_rate():
    r12 = _study("standard", 1, 2)[-1].energy_rate
    r23 = _study("standard", 2, 3)[-1].energy_rate
    ok = abs(r12 - 1.0) <= 0.3 and abs(r23 - 2.0) <= 0.3
    _report(
        3, ok, f"final energy rates (1,2) {r12:.3f} vs 1+-0.3, (2,3) {r23:.3f} vs 2+-0.3"
    )


def test_criterion_04_symmetric_formulation():
    r12 = _study("symmetric", 1, 2)[-1].l2_rate
    r23 = _study("symmetric", 2, 3)[-1].l2_rate
    r22 = _study("symmetric", 2, 2)[-1].l2_rate
    sep = _study("symmetric", 2, 2)[-1].l2_error / _study("symmetric", 2, 3)[-1].l2_error
    mesh = elevate_geometry(build_torus_mesh(SURF, 16, 16), 2, SURF)
    system = assemble(
        mesh, 1, "symmetric", beta=100.0, f=load_field(SURF, "symmetric")
    )
    x, _ = cg_solve(system.A, system.b, system.nullspace, rel_tol=1e-10)
    k = system.nullspace[0]
    orth = abs(x @ k) / (np.linalg.norm(x) * np.linalg.norm(k))
    ok = (
        abs(r12 - 2.0) <= 0.3
        and abs(r23 - 3.0) <= 0.3
        and abs(r22 - 2.0) <= 0.3
        and sep >= 5.0
        and orth < 1e-10
    )
    _report(
        4,
        ok,
        f"final L2 rates (1,2) {r12:.3f} vs 2+-0.3, (2,3) {r23:.3f} vs 3+-0.3, "
        f"(2,2) {r22:.3f} vs 2+-0.3, separation {sep:.2f}x vs >= 5x, "
        f"deflation overlap {orth:.2e} vs < 1e-10",
    )


def test_criterion_05_perturbed_meshes():
    r12 = _study("standard", 1, 2, amplitude=0.2)[-1].l2_rate
    r23 = _study("standard", 2, 3, amplitude=0.2)[-1].l2_rate
    ok = abs(r12 - 2.0) <= 0.4 and abs(r23 - 3.0) <= 0.4
    _report(
        5,
        ok,
        f"perturbed final L2 rates (1,2) {r12:.3f} vs 2+-0.4, (2,3) {r23:.3f} vs 3+-0.4",
    )


def test_criterion_06_beta_insensitivity():
    errs = [_finest_l2(b) for b in (10.0, 100.0, 1000.0)]
    ratio = max(errs) / min(errs)
    ok = ratio < 3.0
    _report(
        6,
        ok,
        "finest (1,2) L2 errors "
        + ", ".join(f"beta={b:g}: {e:.3e}" for b, e in zip((10, 100, 1000), errs))
        + f", max/min {ratio:.3f} vs < 3",
    )


def test_criterion_07_geometry_assumption_suite():
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(["check-geometry"])
    lines = buf.getvalue().strip().splitlines()
    parsed = {}
    for line in lines:
        m = re.fullmatch(
            r"k_g=(\d)\s+max\|rho\| order ([-\d.]+)\s+normal order ([-\d.]+)", line
        )
        assert m, f"unexpected check-geometry line: {line!r}"
        parsed[int(m.group(1))] = (float(m.group(2)), float(m.group(3)))
    ok = code == 0 and set(parsed) == {1, 2, 3}
    for k_g, (d_ord, n_ord) in parsed.items():
        ok = ok and abs(d_ord - (k_g + 1)) <= 0.3 and abs(n_ord - k_g) <= 0.3
    detail = ", ".join(
        f"k_g={k}: |rho| {d:.2f} vs {k + 1}+-0.3, normal {n:.2f} vs {k}+-0.3"
        for k, (d, n) in sorted(parsed.items())
    )
    _report(7, ok, detail)


def test_criterion_08_load_oracle():
    mesh = elevate_geometry(build_torus_mesh(SURF, 216, 216), 4, SURF)
    exact = ExactSolution(SURF)
    fields = tangential_test_fields(SURF, 10, seed=2024)
    worst = {}
    for kind in ("standard", "symmetric"):
        f = lambda y, kind=kind: exact_load(SURF, y, kind)
        res = weak_form_residuals(mesh, 14, exact, f, kind, fields)
        worst[kind] = max(res)
    ok = all(w < 1e-8 for w in worst.values())
    _report(
        8,
        ok,
        f"max weak-form residual standard {worst['standard']:.3e}, "
        f"symmetric {worst['symmetric']:.3e} vs < 1e-8",
    )


def test_criterion_09_kernel_dichotomy():
    mesh = elevate_geometry(build_torus_mesh(SURF, 96, 96), 3, SURF)
    assert mesh.h <= 0.12
    counts, detail = {}, []
    align = None
    for kind, hint in (("standard", 1), ("symmetric", 2)):
        system = assemble(mesh, 2, kind, beta=100.0)
        scale = np.abs(system.A).sum(axis=0).max()
        vecs = numerical_kernel(system, dim_hint=hint)
        rel = [v @ (system.A @ v) / scale for v in vecs]
        counts[kind] = sum(r < KERNEL_THRESHOLD for r in rel)
        detail.append(f"{kind} rel eigs " + ", ".join(f"{r:.2e}" for r in rel))
        if kind == "symmetric":
            align = abs(vecs[0] @ killing_interpolant(mesh, 2))
    ok = counts["standard"] == 0 and counts["symmetric"] == 1 and align > 0.99
    _report(
        9,
        ok,
        f"h {mesh.h:.4f}, "
        + "; ".join(detail)
        + f"; sub-threshold standard {counts['standard']} vs 0, "
        f"symmetric {counts['symmetric']} vs 1, Killing alignment {align:.6f} vs > 0.99",
    )


def test_criterion_10_exact_normal_penalty_variant():
    disc = _study("standard", 1, 1, normal_source="discrete")[-1]
    ex = _study("standard", 1, 1, normal_source="exact-interpolated")[-1]
    ok = (
        abs(disc.energy_rate - 0.0) <= 0.3
        and abs(ex.energy_rate - 1.0) <= 0.3
        and abs(disc.l2_rate - ex.l2_rate) <= 0.3
    )
    _report(
        10,
        ok,
        f"(1,1) energy rates discrete {disc.energy_rate:.3f} vs 0+-0.3, "
        f"exact {ex.energy_rate:.3f} vs 1+-0.3; "
        f"L2 rates {disc.l2_rate:.3f} vs {ex.l2_rate:.3f}, "
        f"|difference| {abs(disc.l2_rate - ex.l2_rate):.3f} vs <= 0.3",
    )
