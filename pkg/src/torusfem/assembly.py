"""Discrete forms and solver for the weakly tangential vector Laplacian.

The unknown is a vector field with three Euclidean components per
Lagrange node of order k_u; the tangent condition is imposed weakly by a
penalty on the normal component, so no tangent frames appear.  The
operator is the Gram form of the tangential derivative

    a_h(v, w) = sum_cells int  D v : D w,   D v = P_h (grad_h v),

optionally symmetrised to the tangential strain, plus the penalty

    s_h(v, w) = beta int h_K^-2 (n . v)(n . w),

with n either the discrete facet normal or a nodal interpolant of the
exact normal, and h_K the area-equivalent size sqrt(2*area) of the cell's
corner triangle.
Surface gradients come from the pseudo-inverse of the 3x2 element
Jacobian and are tangential by construction, so the derivative index of
D v needs no further projection.

Assembly is deterministic and exactly symmetric: local matrices are
einsum contractions whose mirrored entries are bitwise equal, and the
global compression uses a stable sort, so identical inputs give
bitwise-identical matrices and A equals its transpose exactly.  The
solver is a Jacobi-preconditioned conjugate gradient with explicit
deflation of an optional nullspace (the rotational isometry for the
symmetric form).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix

from .geometry import killing_field
from .meshing import (
    ParametricMesh,
    _geometry_tables,
    _number_lattice_nodes,
    cell_length_scales,
)
from .refelem import (
    MAX_QUAD_DEGREE,
    basis_eval,
    lagrange_lattice,
    lattice_size,
    quadrature_for,
)

_CHUNK = 1024  # cells per assembly block; bounds peak memory

#: Rayleigh quotients below this fraction of the matrix norm count as kernel.
KERNEL_THRESHOLD = 1e-8


@dataclass(frozen=True)
class Formulation:
    """Choice of bilinear form and penalty normal."""

    kind: str = "standard"
    normal_source: str = "discrete"

    def __post_init__(self):
        if self.kind not in ("standard", "symmetric"):
            raise ValueError("kind must be 'standard' or 'symmetric'")
        if self.normal_source not in ("discrete", "exact-interpolated"):
            raise ValueError("normal_source must be 'discrete' or 'exact-interpolated'")


def _as_formulation(kind):
    return kind if isinstance(kind, Formulation) else Formulation(kind=kind)


class DofMap:
    """Three consecutive dofs per order-k_u solution node.

    Solution nodes are the degree-k_u lattice deduplicated across cells,
    numbered by the same routine that numbers geometry nodes, so solution
    and geometry nodes coincide when k_u == k_g.  Node positions are the
    element map's images of the lattice points.
    """

    def __init__(self, mesh: ParametricMesh, k_u: int):
        if not 1 <= k_u <= 4:
            raise ValueError("solution order must be in 1..4")
        self.k_u = int(k_u)
        cells, n_nodes, owner_cell, owner_slot = _number_lattice_nodes(
            mesh.cells, self.k_u
        )
        self.cells = cells
        self.n_nodes = n_nodes
        nv = int(mesh.cells[:, :3].max()) + 1
        xyz = np.empty((n_nodes, 3))
        xyz[:nv] = mesh.nodes[:nv]
        if n_nodes > nv:
            vals, _ = basis_eval(mesh.k_g, lagrange_lattice(self.k_u))
            xyz[nv:] = np.einsum(
                "nm,nmd->nd", vals[owner_slot], mesh.nodes[mesh.cells[owner_cell]]
            )
        self.node_xyz = xyz

    @property
    def ndofs(self):
        return 3 * self.n_nodes


def dof_map(mesh: ParametricMesh, k_u: int) -> DofMap:
    """Cached DofMap; meshes are immutable so reuse is safe."""
    cache = getattr(mesh, "_dofmaps", None)
    if cache is None:
        cache = mesh._dofmaps = {}
    if k_u not in cache:
        cache[k_u] = DofMap(mesh, k_u)
    return cache[k_u]


def assembly_quad_degree(k_u: int, k_g: int) -> int:
    """Default rule degree: gradient products on curved cells."""
    return min(MAX_QUAD_DEGREE, 2 * k_u + 2 * (k_g - 1) + 2)


class SparseSystem:
    """Assembled symmetric system with an optional nullspace."""

    def __init__(self, A, b, nullspace=()):
        self.A = A
        self.b = b
        self.nullspace = list(nullspace)


# ____________________________________________________________ local forms


def _surface_gradients(mesh, rule, k_u, cells=None):
    """Geometry and basis tables shared by the local forms.

    Returns (x, n_h, waf, g, Phi): quadrature points on the discrete
    surface, facet normals, weight-scaled area factors (c, q), tangential
    basis gradients (c, q, L, 3) and basis values (q, L).
    """
    pts, w = rule
    x, J, n_h, af, _ = _geometry_tables(mesh, rule, cells=cells)
    Phi, dPhi = basis_eval(k_u, pts)
    Gm = np.einsum("cqdk,cqdl->cqkl", J, J)
    det = Gm[..., 0, 0] * Gm[..., 1, 1] - Gm[..., 0, 1] * Gm[..., 1, 0]
    if np.any(det <= 0.0):
        raise ValueError("degenerate element")
    inv = np.empty_like(Gm)
    inv[..., 0, 0] = Gm[..., 1, 1]
    inv[..., 1, 1] = Gm[..., 0, 0]
    inv[..., 0, 1] = -Gm[..., 0, 1]
    inv[..., 1, 0] = -Gm[..., 1, 0]
    inv /= det[..., None, None]
    JGi = np.einsum("cqdk,cqkl->cqdl", J, inv)
    g = np.einsum("cqdl,qMl->cqMd", JGi, dPhi)
    waf = w[None, :] * af
    return x, n_h, waf, g, Phi


def _stiffness_batch(n_h, waf, g, kind):
    """Local stiffness (c, 3L, 3L) with bitwise-symmetric entries.

    Entry ((M,a),(N,b)) of the standard form is sum_q waf P_ab (g_M.g_N);
    the strain form adds the transposed product g_N[a] g_M[b].  Both are
    built so the mirrored entry multiplies bitwise-equal factors in the
    same order, making the local matrix exactly symmetric.
    """
    c, q, L, _ = g.shape
    P = np.eye(3) - n_h[..., :, None] * n_h[..., None, :]
    dotg = np.einsum("cqMd,cqNd->cqMN", g, g)
    K = np.einsum("cq,cqMN,cqab->cMaNb", waf, dotg, P)
    if kind == "symmetric":
        z = np.sqrt(waf)[:, :, None] * g.reshape(c, q, L * 3)
        E = np.einsum("cqi,cqj->cij", z, z).reshape(c, L, 3, L, 3)
        # E[(N,a),(M,b)] = sum waf g_N[a] g_M[b] -> cross term C[M,a,N,b]
        K = 0.5 * (K + np.transpose(E, (0, 3, 2, 1, 4)))
    return K.reshape(c, 3 * L, 3 * L)


def _penalty_normals(mesh, rule, k_u, normal_source, cells, n_h):
    """Per-point unit normal used by the penalty."""
    if normal_source == "discrete":
        return n_h
    dof = dof_map(mesh, k_u)
    ncoef = mesh.surface.normal(dof.node_xyz)
    Phi, _ = basis_eval(k_u, rule[0])
    conn = dof.cells if cells is None else dof.cells[cells]
    nt = np.einsum("qM,cMa->cqa", Phi, ncoef[conn])
    return nt / np.linalg.norm(nt, axis=-1, keepdims=True)


def _penalty_batch(waf, n, Phi, beta, h):
    """Local penalty (c, 3L, 3L); h is scalar or per-cell (c, 1).

    The weight is folded into the factors as a square root so each entry
    is a plain product sum; mirrored entries then multiply identical
    pairs and the blocks are bitwise symmetric."""
    c, q = waf.shape
    L = Phi.shape[1]
    z = (Phi[None, :, :, None] * n[:, :, None, :]).reshape(c, q, L * 3)
    z = np.sqrt((beta / h**2) * waf)[:, :, None] * z
    return np.einsum("cqi,cqj->cij", z, z)


def _load_batch(x, waf, Phi, f, surface):
    """Local load (c, 3L); f is evaluated at the lifted points."""
    fv = f(surface.closest_point(x)) if surface is not None else f(x)
    return np.einsum("cq,cqa,qM->cMa", waf, np.asarray(fv), Phi).reshape(
        len(x), -1
    )


def local_stiffness(cell, mesh, rule, k_u, kind="standard"):
    """Dense local stiffness of one cell, shape (3L, 3L)."""
    form = _as_formulation(kind)
    _, n_h, waf, g, _ = _surface_gradients(mesh, rule, k_u, np.array([cell]))
    return _stiffness_batch(n_h, waf, g, form.kind)[0]


def local_penalty(cell, mesh, rule, k_u, beta, normal_source="discrete"):
    """Dense local penalty of one cell, shape (3L, 3L)."""
    if beta <= 0.0:
        raise ValueError("penalty parameter must be positive")
    cells = np.array([cell])
    _, n_h, waf, _, Phi = _surface_gradients(mesh, rule, k_u, cells)
    n = _penalty_normals(mesh, rule, k_u, normal_source, cells, n_h)
    h = cell_length_scales(mesh)[cells][:, None]
    return _penalty_batch(waf, n, Phi, beta, h)[0]


def local_load(cell, mesh, rule, k_u, f):
    """Dense local load of one cell, shape (3L,)."""
    x, _, waf, _, Phi = _surface_gradients(mesh, rule, k_u, np.array([cell]))
    return _load_batch(x, waf, Phi, f, mesh.surface)[0]


# ____________________________________________________________ global system


def _csr_from_coo(rows, cols, vals, n):
    """Deterministic COO compression.

    lexsort is stable, so duplicate (row, col) runs keep cell order and
    mirrored entries sum bitwise-equal sequences; the result is exactly
    symmetric whenever the local blocks are.
    """
    order = np.lexsort((cols, rows))
    r = rows[order]
    c = cols[order]
    v = vals[order]
    new = np.empty(len(r), dtype=bool)
    new[0] = True
    new[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
    starts = np.flatnonzero(new)
    data = np.add.reduceat(v, starts)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(r[starts], minlength=n), out=indptr[1:])
    return csr_matrix((data, c[starts].astype(np.int32), indptr), shape=(n, n))


def _assemble_matrices(mesh, k_u, form, beta, rule=None):
    """Stiffness and penalty as separate CSR matrices."""
    if beta <= 0.0:
        raise ValueError("penalty parameter must be positive")
    if rule is None:
        rule = quadrature_for(assembly_quad_degree(k_u, mesh.k_g))
    dof = dof_map(mesh, k_u)
    hK = cell_length_scales(mesh)
    n_cells = mesh.n_cells
    L3 = 3 * lattice_size(k_u)
    block = L3 * L3
    rows = np.empty(n_cells * block, dtype=np.int32)
    cols = np.empty(n_cells * block, dtype=np.int32)
    vk = np.empty(n_cells * block)
    vs = np.empty(n_cells * block)
    for lo in range(0, n_cells, _CHUNK):
        cells = np.arange(lo, min(lo + _CHUNK, n_cells))
        _, n_h, waf, g, Phi = _surface_gradients(mesh, rule, k_u, cells)
        n_pen = _penalty_normals(mesh, rule, k_u, form.normal_source, cells, n_h)
        K = _stiffness_batch(n_h, waf, g, form.kind)
        S = _penalty_batch(waf, n_pen, Phi, beta, hK[cells][:, None])
        gd = (3 * dof.cells[cells][:, :, None] + np.arange(3)).reshape(-1, L3)
        sl = slice(lo * block, lo * block + len(cells) * block)
        rows[sl] = np.repeat(gd, L3, axis=1).ravel()
        cols[sl] = np.tile(gd, (1, L3)).ravel()
        vk[sl] = K.ravel()
        vs[sl] = S.ravel()
    Kmat = _csr_from_coo(rows, cols, vk, dof.ndofs)
    Smat = _csr_from_coo(rows, cols, vs, dof.ndofs)
    return Kmat, Smat


def _assemble_load(mesh, k_u, f, rule=None):
    if rule is None:
        rule = quadrature_for(assembly_quad_degree(k_u, mesh.k_g))
    dof = dof_map(mesh, k_u)
    b = np.zeros(dof.ndofs)
    if f is None:
        return b
    for lo in range(0, mesh.n_cells, _CHUNK):
        cells = np.arange(lo, min(lo + _CHUNK, mesh.n_cells))
        x, _, waf, _, Phi = _surface_gradients(mesh, rule, k_u, cells)
        local = _load_batch(x, waf, Phi, f, mesh.surface)
        gd = (3 * dof.cells[cells][:, :, None] + np.arange(3)).ravel()
        b += np.bincount(gd, weights=local.ravel(), minlength=dof.ndofs)
    return b


def killing_interpolant(mesh: ParametricMesh, k_u: int) -> np.ndarray:
    """Unit-norm coefficient vector of the nodal rotation-field interpolant."""
    dof = dof_map(mesh, k_u)
    z = killing_field(mesh.surface)(dof.node_xyz).ravel()
    return z / np.linalg.norm(z)


def assemble(mesh, k_u, kind="standard", beta=100.0, f=None) -> SparseSystem:
    """Assemble A = stiffness + penalty and the load into a SparseSystem.

    `kind` is a Formulation or one of "standard"/"symmetric".  The
    symmetric form carries the interpolated rotation field as nullspace,
    the standard form is positive definite and carries none.
    """
    form = _as_formulation(kind)
    K, S = _assemble_matrices(mesh, k_u, form, beta)
    b = _assemble_load(mesh, k_u, f)
    null = [killing_interpolant(mesh, k_u)] if form.kind == "symmetric" else []
    return SparseSystem((K + S).tocsr(), b, null)


# ____________________________________________________________ linear solver


def _deflate(v, basis):
    for z in basis:
        v -= (z @ v) * z
    return v


def cg_solve(A, b, nullspace=(), rel_tol=1e-10, max_iter=None):
    """Jacobi-preconditioned CG with nullspace deflation.

    Returns (x, iterations).  The iterates are re-orthogonalized against
    the nullspace every step; convergence is certified on the true
    residual, restarting from the current iterate if the recurrence
    drifted.  Raises after 50 sqrt(dofs) iterations.
    """
    n = A.shape[0]
    if max_iter is None:
        max_iter = int(np.ceil(50.0 * np.sqrt(n)))
    Z = _orthonormalize(nullspace)
    b = _deflate(b.astype(float).copy(), Z)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0
    diag = A.diagonal()
    M = np.where(diag > 0.0, 1.0 / np.where(diag > 0.0, diag, 1.0), 1.0)
    x = np.zeros(n)
    iters = 0
    while iters < max_iter:
        r = _deflate(b - A @ x, Z)
        if np.linalg.norm(r) <= rel_tol * bnorm:
            return _deflate(x, Z), iters
        z = M * r
        p = z.copy()
        rz = r @ z
        while iters < max_iter:
            iters += 1
            Ap = A @ p
            pAp = p @ Ap
            if pAp <= 0.0:
                raise RuntimeError(
                    "CG did not converge: nonpositive curvature encountered"
                )
            alpha = rz / pAp
            x += alpha * p
            r -= alpha * Ap
            r = _deflate(r, Z)
            res = np.linalg.norm(r)
            if res <= 0.5 * rel_tol * bnorm:
                break  # recheck against the true residual
            z = M * r
            rz_new = r @ z
            p = _deflate(z + (rz_new / rz) * p, Z)
            rz = rz_new
    r = b - A @ _deflate(x, Z)
    res = np.linalg.norm(_deflate(r, Z)) / bnorm
    if res <= rel_tol:
        return _deflate(x, Z), iters
    raise RuntimeError(
        f"CG did not converge: relative residual {res:.3e} after {iters} iterations"
    )


def solve(system: SparseSystem, rel_tol: float = 1e-10) -> np.ndarray:
    """Solve the assembled system; see cg_solve for the contract."""
    x, _ = cg_solve(system.A, system.b, system.nullspace, rel_tol)
    return x


def _orthonormalize(vectors):
    out = []
    for v in vectors:
        v = np.asarray(v, dtype=float).copy()
        for _ in range(2):  # twice for numerical orthogonality
            v = _deflate(v, out)
        norm = np.linalg.norm(v)
        if norm > 1e-14:
            out.append(v / norm)
    return out


def numerical_kernel(system: SparseSystem, dim_hint: int) -> list[np.ndarray]:
    """Approximate eigenvectors of the dim_hint smallest eigenvalues.

    Shifted inverse power iteration with CG inner solves and Gram-Schmidt
    deflation of previously found vectors; deterministic (seeded start).
    The caller classifies kernel membership from the Rayleigh quotients,
    e.g. against KERNEL_THRESHOLD times the matrix norm.
    """
    if dim_hint < 1:
        raise ValueError("dim_hint must be at least 1")
    A = system.A
    n = A.shape[0]
    scale = np.abs(A).sum(axis=0).max()  # 1-norm
    shift = 1e-6 * scale
    B = (A + shift * _identity_like(A)).tocsr()
    rng = np.random.default_rng(0)
    found: list[np.ndarray] = []
    for _ in range(dim_hint):
        v = rng.standard_normal(n)
        v = _deflate(v, found)
        v /= np.linalg.norm(v)
        for _ in range(60):
            try:
                w, _ = cg_solve(B, v, nullspace=found, rel_tol=1e-8)
            except RuntimeError as exc:
                raise RuntimeError("kernel estimation failed") from exc
            norm = np.linalg.norm(w)
            if norm == 0.0:
                raise RuntimeError("kernel estimation failed")
            v = w / norm
            lam = v @ (A @ v)
            if np.linalg.norm(A @ v - lam * v) <= 1e-10 * scale:
                break
        found.append(v)
    return found


def _identity_like(A):
    n = A.shape[0]
    return csr_matrix(
        (np.ones(n), np.arange(n, dtype=np.int32), np.arange(n + 1, dtype=np.int64)),
        shape=(n, n),
    )
