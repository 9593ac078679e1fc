"""Surface finite elements for the vector Laplacian on an embedded torus."""

from .assembly import (
    Formulation,
    KERNEL_THRESHOLD,
    SparseSystem,
    assemble,
    cg_solve,
    dof_map,
    killing_interpolant,
    numerical_kernel,
    solve,
)
from .cli import (
    RunConfig,
    export_vtk,
    geometry_orders,
    run_beta_sweep,
    run_convergence,
)
from .geometry import TorusSurface, killing_field
from .manufactured import (
    ExactSolution,
    energy_error,
    exact_load,
    exact_solution,
    l2_error,
    load_field,
    nodal_interpolant,
)
from .meshing import (
    ParametricMesh,
    build_torus_mesh,
    cell_length_scales,
    elevate_geometry,
    mesh_parameter,
    perturb_mesh,
    read_mesh,
    write_mesh,
)

__all__ = [
    "ExactSolution",
    "Formulation",
    "KERNEL_THRESHOLD",
    "ParametricMesh",
    "RunConfig",
    "SparseSystem",
    "TorusSurface",
    "assemble",
    "build_torus_mesh",
    "cell_length_scales",
    "cg_solve",
    "dof_map",
    "elevate_geometry",
    "energy_error",
    "exact_load",
    "exact_solution",
    "export_vtk",
    "geometry_orders",
    "killing_field",
    "killing_interpolant",
    "l2_error",
    "load_field",
    "mesh_parameter",
    "nodal_interpolant",
    "numerical_kernel",
    "perturb_mesh",
    "read_mesh",
    "run_beta_sweep",
    "run_convergence",
    "solve",
    "write_mesh",
]
