"""Parametric triangulations of the torus.

A mesh stores nodes, cells and the geometry order k_g.  Cells list
``(k_g+1)(k_g+2)/2`` node indices in ``lagrange_lattice`` order, corner
vertices first, so the corner triangle of a curved cell is always
``cells[:, :3]``.  Construction is three steps: a structured theta-phi
grid split into triangles, an optional random tangential perturbation of
the vertices (reprojected onto the surface), and elevation to higher
geometry order by pushing the affine lattice nodes onto the surface
through the closest point map.

New nodes created on shared edges are deduplicated by the sorted vertex
pair of the edge, which makes the numbering independent of dictionary
hashing and the discrete surface watertight.  The same numbering routine
also builds the solution-space connectivity, so solution and geometry
nodes coincide whenever the orders match.
"""

from __future__ import annotations

import numpy as np

from .geometry import TorusSurface, _tangent_pair
from .refelem import basis_eval, lagrange_lattice, lattice_size

_EDGE_VERTICES = ((0, 1), (1, 2), (2, 0))


class ParametricMesh:
    """Triangulated surface with order-k_g curved cells.

    Treated as immutable once built; all derived objects share it.
    """

    def __init__(self, k_g, nodes, cells, surface=None):
        self.k_g = int(k_g)
        self.nodes = np.asarray(nodes, dtype=float)
        self.cells = np.asarray(cells, dtype=np.int64)
        self.surface = surface
        if self.cells.ndim != 2 or self.cells.shape[1] != lattice_size(self.k_g):
            raise ValueError("cell width does not match geometry order")
        self._h = None

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def h(self):
        if self._h is None:
            self._h = mesh_parameter(self)
        return self._h


def build_torus_mesh(surface: TorusSurface, n_major: int, n_minor: int) -> ParametricMesh:
    """Structured triangulation of the torus, geometry order 1.

    ``n_major`` counts cells around the axis, ``n_minor`` around the tube.
    Every grid quad is split along the same diagonal; triangles wind so
    the facet normals point outward.
    """
    if n_major < 8 or n_minor < 8:
        raise ValueError("torus grid needs n_major >= 8 and n_minor >= 8")
    R, r = surface.R, surface.r
    phi = 2.0 * np.pi * np.arange(n_major) / n_major
    theta = 2.0 * np.pi * np.arange(n_minor) / n_minor
    P, T = np.meshgrid(phi, theta, indexing="ij")
    ring = R + r * np.cos(T)
    nodes = np.stack(
        (ring * np.cos(P), ring * np.sin(P), r * np.sin(T)), axis=-1
    ).reshape(-1, 3)

    i = np.arange(n_major)[:, None]
    j = np.arange(n_minor)[None, :]

    def vid(ii, jj):
        return ((ii % n_major) * n_minor + (jj % n_minor)).ravel()

    a, b = vid(i, j), vid(i + 1, j)
    c, d = vid(i + 1, j + 1), vid(i, j + 1)
    cells = np.empty((2 * n_major * n_minor, 3), dtype=np.int64)
    cells[0::2] = np.stack((a, b, c), axis=-1)
    cells[1::2] = np.stack((a, c, d), axis=-1)
    return ParametricMesh(1, nodes, cells, surface)


def perturb_mesh(mesh: ParametricMesh, amplitude: float, seed: int) -> ParametricMesh:
    """Displace vertices tangentially, then reproject onto the surface.

    Each vertex draws a uniform point in the tangent disk whose radius is
    amplitude times the vertex's shortest incident corner edge.  Scaling
    the displacement locally keeps cell quality uniform on anisotropic
    grids, where a bound tied to the global diameter lets the largest
    cells' worth of movement land on the smallest cells and flatten them.
    Deterministic for a fixed seed.  Rejects perturbations that flatten a
    cell below 1e-3 of its original area.
    """
    if mesh.k_g != 1:
        raise ValueError("perturbation applies to the vertex mesh (k_g = 1)")
    if not 0.0 <= amplitude <= 0.3:
        raise ValueError("perturbation amplitude must be in [0, 0.3]")
    if amplitude == 0.0:
        return mesh
    surf = mesh.surface
    rng = np.random.default_rng(seed)
    nv = mesh.n_nodes
    hloc = np.full(nv, np.inf)
    for a, b in ((0, 1), (1, 2), (2, 0)):
        va, vb = mesh.cells[:, a], mesh.cells[:, b]
        ell = np.linalg.norm(mesh.nodes[va] - mesh.nodes[vb], axis=1)
        np.minimum.at(hloc, va, ell)
        np.minimum.at(hloc, vb, ell)
    # sqrt of a uniform radius fraction gives uniform density in the disk
    rad = amplitude * hloc * np.sqrt(rng.uniform(size=nv))
    ang = rng.uniform(0.0, 2.0 * np.pi, size=nv)
    t1, t2 = _tangent_pair(surf.normal(mesh.nodes))
    disp = rad[:, None] * (np.cos(ang)[:, None] * t1 + np.sin(ang)[:, None] * t2)
    moved = surf.closest_point(mesh.nodes + disp)
    if np.any(_corner_areas(moved, mesh.cells) < 1e-3 * _corner_areas(mesh.nodes, mesh.cells)):
        raise ValueError("perturbation produced degenerate cell")
    return ParametricMesh(1, moved, mesh.cells, surf)


def _corner_areas(nodes, cells):
    p = nodes[cells[:, :3]]
    return 0.5 * np.linalg.norm(
        np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=-1
    )


def elevate_geometry(mesh: ParametricMesh, k_g: int, surface: TorusSurface) -> ParametricMesh:
    """Raise the geometry order by lifting affine lattice nodes onto Gamma."""
    if mesh.k_g != 1:
        raise ValueError("elevation starts from the vertex mesh (k_g = 1)")
    if not 1 <= k_g <= 4:
        raise ValueError("geometry order must be in 1..4")
    if k_g == 1:
        return mesh
    cells, n_nodes, owner_cell, owner_slot = _number_lattice_nodes(mesh.cells, k_g)
    nv = mesh.n_nodes
    lat = lagrange_lattice(k_g)
    bary = np.stack((1.0 - lat[:, 0] - lat[:, 1], lat[:, 0], lat[:, 1]), axis=-1)
    corners = mesh.nodes[mesh.cells[owner_cell, :3]]
    affine = np.einsum("nv,nvd->nd", bary[owner_slot], corners)
    nodes = np.empty((n_nodes, 3))
    nodes[:nv] = mesh.nodes
    nodes[nv:] = surface.closest_point(affine)
    return ParametricMesh(k_g, nodes, cells, surface)


def _number_lattice_nodes(corner_cells, k):
    """Global numbering of the degree-k lattice over a corner triangulation.

    Vertices keep their ids; edge and interior nodes get fresh ids in
    first-encounter cell order.  Edge nodes are shared through the sorted
    vertex pair, stored from the smaller vertex id to the larger, and read
    back reversed by cells that traverse the edge the other way.

    Returns (cells, n_nodes, owner_cell, owner_slot); the owner arrays
    give, for every freshly created node, one cell and lattice slot whose
    mapped position defines the node.
    """
    corner_cells = np.asarray(corner_cells)[:, :3]
    nv = int(corner_cells.max()) + 1
    L = lattice_size(k)
    n_cells = len(corner_cells)
    cells = np.empty((n_cells, L), dtype=np.int64)
    cells[:, :3] = corner_cells
    per_edge = k - 1
    n_interior = L - 3 - 3 * per_edge
    edge_nodes: dict[tuple[int, int], np.ndarray] = {}
    owner_cell, owner_slot = [], []
    next_id = nv
    for c in range(n_cells):
        for e, (la, lb) in enumerate(_EDGE_VERTICES):
            ga, gb = int(corner_cells[c, la]), int(corner_cells[c, lb])
            key = (ga, gb) if ga < gb else (gb, ga)
            ids = edge_nodes.get(key)
            if ids is None:
                ids = np.arange(next_id, next_id + per_edge)
                next_id += per_edge
                edge_nodes[key] = ids
                slots = range(3 + e * per_edge, 3 + (e + 1) * per_edge)
                # record slots in stored (small id -> large id) direction
                slots = list(slots) if ga < gb else list(slots)[::-1]
                owner_cell.extend([c] * per_edge)
                owner_slot.extend(slots)
            local = ids if ga < gb else ids[::-1]
            cells[c, 3 + e * per_edge : 3 + (e + 1) * per_edge] = local
        cells[c, 3 + 3 * per_edge :] = np.arange(next_id, next_id + n_interior)
        owner_cell.extend([c] * n_interior)
        owner_slot.extend(range(3 + 3 * per_edge, L))
        next_id += n_interior
    return (
        cells,
        next_id,
        np.asarray(owner_cell, dtype=np.int64),
        np.asarray(owner_slot, dtype=np.int64),
    )


def mesh_parameter(mesh: ParametricMesh) -> float:
    """Largest corner-triangle diameter; the global h of the error norms."""
    if mesh.n_cells == 0:
        raise ValueError("empty mesh")
    p = mesh.nodes[mesh.cells[:, :3]]
    edges = p - p[:, [1, 2, 0]]
    return float(np.linalg.norm(edges, axis=-1).max())


def cell_length_scales(mesh: ParametricMesh) -> np.ndarray:
    """Area-equivalent size sqrt(2*area) of every corner triangle, (n_cells,).

    The tangent-condition penalty scales with this local length instead
    of the global diameter: the structured torus meshes are anisotropic,
    and a globally scaled penalty is too loose on the small cells to keep
    the normal component of the solution below the interpolation error.
    The area scale, unlike the circumradius, does not blow up on stretched
    cells, which would make the solution drift with the penalty parameter.
    """
    if mesh.n_cells == 0:
        raise ValueError("empty mesh")
    area = _corner_areas(mesh.nodes, mesh.cells)
    if np.any(area <= 0.0):
        raise ValueError("degenerate element")
    return np.sqrt(2.0 * area)


class ElementGeometry:
    """Discrete geometric quantities of one cell at quadrature points."""

    __slots__ = ("x", "J", "n_h", "area_factor", "P_h")

    def __init__(self, x, J, n_h, area_factor, P_h):
        self.x = x
        self.J = J
        self.n_h = n_h
        self.area_factor = area_factor
        self.P_h = P_h


def element_geometry(mesh: ParametricMesh, cell: int, rule, surface=None) -> ElementGeometry:
    """Map one cell to the quadrature points of `rule`.

    `rule` is a (points, weights) pair.  The discrete normal is the
    normalized cross product of the Jacobian columns, sign-corrected to
    point outward when an exact surface is available.
    """
    x, J, n_h, af, P_h = _geometry_tables(
        mesh, rule, cells=np.array([cell]), surface=surface
    )
    return ElementGeometry(x[0], J[0], n_h[0], af[0], P_h[0])


def _geometry_tables(mesh, rule, cells=None, surface=None):
    """Batched element geometry over `cells` (all cells by default).

    Returns (x, J, n_h, area_factor, P_h) with leading axes (cell, point).
    """
    pts = np.asarray(rule[0], dtype=float)
    conn = mesh.cells if cells is None else mesh.cells[cells]
    vals, grads = basis_eval(mesh.k_g, pts)
    X = mesh.nodes[conn]
    x = np.einsum("qm,cmd->cqd", vals, X)
    J = np.einsum("qmk,cmd->cqdk", grads, X)
    cr = np.cross(J[..., 0], J[..., 1])
    af = np.linalg.norm(cr, axis=-1)
    if np.any(af < 1e-14):
        raise ValueError("degenerate element")
    n_h = cr / af[..., None]
    surf = mesh.surface if surface is None else surface
    if surf is not None:
        flip = np.sign(np.einsum("cqd,cqd->cq", n_h, surf.normal(x)))
        n_h = n_h * flip[..., None]
    P_h = np.eye(3) - n_h[..., :, None] * n_h[..., None, :]
    return x, J, n_h, af, P_h


def write_mesh(mesh: ParametricMesh, path) -> None:
    """Plain-text dump: header, nodes (17 significant digits), cells."""
    with open(path, "w") as f:
        f.write(f"k_g {mesh.k_g} nodes {mesh.n_nodes} cells {mesh.n_cells}\n")
        for p in mesh.nodes:
            f.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        for c in mesh.cells:
            f.write(" ".join(str(int(v)) for v in c) + "\n")


def read_mesh(path, surface=None) -> ParametricMesh:
    with open(path) as f:
        head = f.readline().split()
        if len(head) != 6 or head[0] != "k_g" or head[2] != "nodes" or head[4] != "cells":
            raise ValueError("malformed mesh header")
        k_g, n_nodes, n_cells = int(head[1]), int(head[3]), int(head[5])
        nodes = np.loadtxt(f, max_rows=n_nodes).reshape(n_nodes, 3)
        cells = np.loadtxt(f, dtype=np.int64, max_rows=n_cells).reshape(n_cells, -1)
    return ParametricMesh(k_g, nodes, cells, surface)
