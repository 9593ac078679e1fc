"""Command line driver: convergence studies, penalty sweeps, VTK export.

Every run is described by a RunConfig and produces a CSV table; plots
are made downstream from those files, never here.  Refinement level i
uses a (n_major * 2^i) x (n_minor * 2^i) grid, so the tabulated rates
are log2 ratios of consecutive errors.

Configs can come from a line-oriented file of "key = value" settings
(keys are the RunConfig field names); command line flags override file
entries, which override the defaults.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .assembly import Formulation, assemble, cg_solve, dof_map
from .geometry import TorusSurface
from .manufactured import ExactSolution, energy_error, l2_error, load_field
from .meshing import (
    ParametricMesh,
    _geometry_tables,
    build_torus_mesh,
    elevate_geometry,
    perturb_mesh,
)
from .refelem import basis_eval, lagrange_lattice, lattice_size, quadrature_for


@dataclass(frozen=True)
class RunConfig:
    """Validated description of one study; invalid settings raise at construction."""

    formulation: str = "standard"
    k_u: int = 1
    k_g: int = 2
    beta: float = 100.0
    levels: int = 4
    n_major: int = 16
    n_minor: int = 16
    amplitude: float = 0.0
    seed: int = 0
    normal_source: str = "discrete"
    rel_tol: float = 1e-10
    output_dir: str = "."

    def __post_init__(self):
        if self.formulation not in ("standard", "symmetric"):
            raise ValueError("formulation must be 'standard' or 'symmetric'")
        if self.normal_source not in ("discrete", "exact-interpolated"):
            raise ValueError("normal_source must be 'discrete' or 'exact-interpolated'")
        if not 1 <= self.k_u <= 3:
            raise ValueError("k_u must be in 1..3")
        if not self.k_u <= self.k_g <= min(self.k_u + 2, 4):
            raise ValueError("k_g must satisfy k_u <= k_g <= min(k_u + 2, 4)")
        if not 2 <= self.levels <= 6:
            raise ValueError("levels must be in 2..6")
        if self.beta <= 0.0:
            raise ValueError("beta must be positive")
        if not 0.0 <= self.amplitude <= 0.3:
            raise ValueError("perturbation amplitude must be in [0, 0.3]")
        if min(self.n_major, self.n_minor) < 8:
            raise ValueError("base grid must be at least 8 x 8")
        if self.rel_tol <= 0.0:
            raise ValueError("rel_tol must be positive")


@dataclass(frozen=True)
class ConvergenceRecord:
    """One refinement level of a study; rates are None on the first level."""

    level: int
    h: float
    dofs: int
    l2_error: float
    energy_error: float
    l2_rate: float | None
    energy_rate: float | None
    cg_iters: int
    seconds: float


CSV_COLUMNS = (
    "level",
    "h",
    "dofs",
    "l2_error",
    "energy_error",
    "l2_rate",
    "energy_rate",
    "cg_iters",
    "seconds",
)


def _level_mesh(config, level, surface):
    n_maj = config.n_major << level
    n_min = config.n_minor << level
    mesh = build_torus_mesh(surface, n_maj, n_min)
    if config.amplitude > 0.0:
        mesh = perturb_mesh(mesh, config.amplitude, config.seed + level)
    if config.k_g > 1:
        mesh = elevate_geometry(mesh, config.k_g, surface)
    return mesh


def _level_records(config):
    """Yield one ConvergenceRecord per level; solver failures propagate mid-stream."""
    surface = TorusSurface()
    exact = ExactSolution(surface)
    f = load_field(surface, config.formulation)
    form = Formulation(config.formulation, config.normal_source)
    prev = None
    for level in range(config.levels):
        t0 = time.perf_counter()
        mesh = _level_mesh(config, level, surface)
        system = assemble(mesh, config.k_u, kind=form, beta=config.beta, f=f)
        x, iters = cg_solve(
            system.A, system.b, system.nullspace, rel_tol=config.rel_tol
        )
        l2 = l2_error(mesh, config.k_u, x, exact)
        en = energy_error(mesh, config.k_u, x, exact)
        rec = ConvergenceRecord(
            level=level,
            h=mesh.h,
            dofs=dof_map(mesh, config.k_u).ndofs,
            l2_error=l2,
            energy_error=en,
            l2_rate=None if prev is None else float(np.log2(prev[0] / l2)),
            energy_rate=None if prev is None else float(np.log2(prev[1] / en)),
            cg_iters=iters,
            seconds=time.perf_counter() - t0,
        )
        prev = (l2, en)
        yield rec


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _record_row(rec):
    return [_cell(getattr(rec, name)) for name in CSV_COLUMNS]


def _write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def run_convergence(config: RunConfig, path=None) -> list[ConvergenceRecord]:
    """Run the refinement study and write its CSV (partial on solver failure)."""
    if path is None:
        path = Path(config.output_dir) / "convergence.csv"
    records = []
    try:
        for rec in _level_records(config):
            records.append(rec)
    except RuntimeError:
        _write_csv(path, CSV_COLUMNS, [_record_row(r) for r in records])
        raise
    _write_csv(path, CSV_COLUMNS, [_record_row(r) for r in records])
    return records


def run_beta_sweep(config: RunConfig, betas, path=None) -> dict[float, list[ConvergenceRecord]]:
    """Repeat the study per penalty weight; one CSV with a leading beta column."""
    betas = [float(b) for b in betas]
    if not betas:
        raise ValueError("beta sweep requires at least one value")
    if min(betas) <= 0.0:
        raise ValueError("beta must be positive")
    if path is None:
        path = Path(config.output_dir) / "beta_sweep.csv"
    out = {}
    rows = []
    try:
        for beta in betas:
            runs = []
            for rec in _level_records(dataclasses.replace(config, beta=beta)):
                runs.append(rec)
                rows.append([_cell(beta)] + _record_row(rec))
            out[beta] = runs
    except RuntimeError:
        _write_csv(path, ("beta",) + CSV_COLUMNS, rows)
        raise
    _write_csv(path, ("beta",) + CSV_COLUMNS, rows)
    return out


# ____________________________________________________________ VTK export


def _lattice_triangles(k):
    """Split the degree-k lattice into k^2 sub-triangles (indices into it)."""
    pts = lagrange_lattice(k)
    index = {}
    for m, p in enumerate(np.rint(pts * k).astype(int)):
        index[(p[0], p[1])] = m
    tris = []
    for j in range(k):
        for i in range(k - j):
            tris.append([index[i, j], index[i + 1, j], index[i, j + 1]])
            if i + j < k - 1:
                tris.append([index[i + 1, j], index[i + 1, j + 1], index[i, j + 1]])
    return np.array(tris, dtype=np.int64)


def export_vtk(mesh: ParametricMesh, k_u: int, coeffs, path) -> None:
    """Write the solution as a legacy ASCII VTK triangle mesh.

    Curved cells are subsampled on their geometry lattice, so the file
    has n_cells * lattice_size(k_g) points (shared points duplicated)
    and n_cells * k_g^2 flat triangles.  Point data: the solution vector
    "u" and "error_magnitude" = |u_h - u^e| against the closest-point
    extension of the reference solution.
    """
    if mesh.surface is None:
        raise ValueError("mesh carries no surface")
    dm = dof_map(mesh, k_u)
    coeffs = np.asarray(coeffs, dtype=float).reshape(-1)
    if coeffs.size != dm.ndofs:
        raise ValueError("coefficient vector does not match the dof map")
    ref = lagrange_lattice(mesh.k_g)
    L = lattice_size(mesh.k_g)
    # the geometry basis is nodal on its own lattice, so the subsample
    # points are the mesh nodes in cell order
    pts = mesh.nodes[mesh.cells].reshape(-1, 3)
    vals, _ = basis_eval(k_u, ref)
    u = np.einsum("lm,cmd->cld", vals, coeffs.reshape(-1, 3)[dm.cells]).reshape(-1, 3)
    err = np.linalg.norm(u - ExactSolution(mesh.surface).extension(pts), axis=1)
    tri = _lattice_triangles(mesh.k_g)
    offsets = np.arange(mesh.n_cells, dtype=np.int64)[:, None, None] * L
    tris = (tri[None, :, :] + offsets).reshape(-1, 3)

    def fmt(row):
        return " ".join(repr(float(v)) for v in row)

    lines = [
        "# vtk DataFile Version 3.0",
        "torus vector Laplacian solution",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(pts)} double",
    ]
    lines += [fmt(p) for p in pts]
    lines.append(f"CELLS {len(tris)} {4 * len(tris)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in tris]
    lines.append(f"CELL_TYPES {len(tris)}")
    lines += ["5"] * len(tris)
    lines.append(f"POINT_DATA {len(pts)}")
    lines.append("VECTORS u double")
    lines += [fmt(v) for v in u]
    lines.append("SCALARS error_magnitude double 1")
    lines.append("LOOKUP_TABLE default")
    lines += [repr(float(e)) for e in err]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk(path):
    """Read a file written by export_vtk: (points, triangles, u, error_magnitude)."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh]
    i = lines.index(next(ln for ln in lines if ln.startswith("POINTS")))
    n_pts = int(lines[i].split()[1])
    pts = np.array([[float(t) for t in ln.split()] for ln in lines[i + 1 : i + 1 + n_pts]])
    i = i + 1 + n_pts
    n_tri = int(lines[i].split()[1])
    tris = np.array(
        [[int(t) for t in ln.split()[1:]] for ln in lines[i + 1 : i + 1 + n_tri]],
        dtype=np.int64,
    )
    i = lines.index("VECTORS u double")
    u = np.array([[float(t) for t in ln.split()] for ln in lines[i + 1 : i + 1 + n_pts]])
    i = lines.index("LOOKUP_TABLE default")
    err = np.array([float(ln) for ln in lines[i + 1 : i + 1 + n_pts]])
    return pts, tris, u, err


# ____________________________________________________________ geometry check


def geometry_orders(base=8, refinements=4, degree=6):
    """Observed geometry accuracy orders per k_g.

    Returns {k_g: (distance_order, normal_order)} where the first is the
    decay order of max|rho| over quadrature points and the second that of
    the worst normal deviation |n(p(x)) - n_h|.  Orders are mean log2
    ratios over a doubling sequence of grids.
    """
    surface = TorusSurface()
    rule = quadrature_for(degree)
    out = {}
    for k_g in (1, 2, 3):
        dist, nrm = [], []
        for lev in range(refinements):
            n = base << lev
            mesh = build_torus_mesh(surface, n, n)
            if k_g > 1:
                mesh = elevate_geometry(mesh, k_g, surface)
            x, _, n_h, _, _ = _geometry_tables(mesh, rule)
            x = x.reshape(-1, 3)
            dist.append(np.abs(surface.signed_distance(x)).max())
            gap = surface.normal(surface.closest_point(x)) - n_h.reshape(-1, 3)
            nrm.append(np.linalg.norm(gap, axis=1).max())
        order = lambda e: float(np.mean(np.log2(np.asarray(e)[:-1] / np.asarray(e)[1:])))
        out[k_g] = (order(dist), order(nrm))
    return out


# ____________________________________________________________ entry point


_FIELD_TYPES = {f.name: type(f.default) for f in dataclasses.fields(RunConfig)}


def _parse_config_file(path):
    values = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if not eq or not key or not val:
                raise ValueError(f"{path}:{ln}: expected 'key = value'")
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path}:{ln}: unknown setting '{key}'")
            try:
                values[key] = _FIELD_TYPES[key](val)
            except ValueError:
                raise ValueError(f"{path}:{ln}: invalid value for '{key}'") from None
    return values


def _config_from_args(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(_parse_config_file(args.config))
    for name in _FIELD_TYPES:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    return RunConfig(**values)


def _add_config_flags(sub):
    sub.add_argument("--config", help="file of 'key = value' settings")
    for name, typ in _FIELD_TYPES.items():
        sub.add_argument(f"--{name}", type=typ, default=None)


def _cmd_converge(args):
    config = _config_from_args(args)
    path = Path(config.output_dir) / "convergence.csv"
    records = run_convergence(config, path)
    for rec in records:
        rate = "" if rec.l2_rate is None else f"  rate {rec.l2_rate:.2f}"
        print(f"level {rec.level}: h {rec.h:.4f}  l2 {rec.l2_error:.3e}{rate}")
    print(f"wrote {path}")
    return 0


def _cmd_beta_sweep(args):
    config = _config_from_args(args)
    betas = [float(t) for t in args.betas.split(",") if t.strip()]
    path = Path(config.output_dir) / "beta_sweep.csv"
    run_beta_sweep(config, betas, path)
    print(f"wrote {path}")
    return 0


def _cmd_export(args):
    config = _config_from_args(args)
    surface = TorusSurface()
    mesh = _level_mesh(config, 0, surface)
    system = assemble(
        mesh,
        config.k_u,
        kind=Formulation(config.formulation, config.normal_source),
        beta=config.beta,
        f=load_field(surface, config.formulation),
    )
    x, _ = cg_solve(system.A, system.b, system.nullspace, rel_tol=config.rel_tol)
    path = args.path or str(Path(config.output_dir) / "solution.vtk")
    export_vtk(mesh, config.k_u, x, path)
    print(f"wrote {path}")
    return 0


def _cmd_check_geometry(args):
    for k_g, (d_ord, n_ord) in geometry_orders().items():
        print(f"k_g={k_g}  max|rho| order {d_ord:.2f}  normal order {n_ord:.2f}")
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="torusfem", description="surface FEM studies on the torus"
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("converge", help="refinement study, writes convergence.csv")
    _add_config_flags(sub)
    sub.set_defaults(func=_cmd_converge)

    sub = subs.add_parser("beta-sweep", help="study per penalty weight, one CSV")
    _add_config_flags(sub)
    sub.add_argument("--betas", required=True, help="comma-separated weights")
    sub.set_defaults(func=_cmd_beta_sweep)

    sub = subs.add_parser("export", help="solve once and write a VTK file")
    _add_config_flags(sub)
    sub.add_argument("--path", default=None, help="output file (default: output_dir/solution.vtk)")
    sub.set_defaults(func=_cmd_export)

    sub = subs.add_parser("check-geometry", help="print observed geometry accuracy orders")
    sub.set_defaults(func=_cmd_check_geometry)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
