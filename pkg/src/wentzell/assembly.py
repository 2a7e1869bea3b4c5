"""P1 assembly of the bilinear forms and the nonlinear boundary terms.

Three quadratic forms are assembled once per mesh:

* interior stiffness  ``int_Omega grad u . grad v`` (constrained rows/cols
  replaced by the identity),
* boundary stiffness  ``int_Gamma1 u_s v_s`` (1-D Laplacian in arc length),
* boundary mass       ``int_Gamma1 u v``.

The p-dependent terms ``int_Gamma1 |u|^p`` and its derivatives are evaluated
on demand with a 4-point Gauss-Legendre rule per GAMMA1 edge.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .linalg import SPDFactor
from .mesh import GAMMA1, DofMap, Mesh, build_dof_map

GAUSS_POINTS, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(4)
# map to [0, 1]
GAUSS_POINTS = 0.5 * (GAUSS_POINTS + 1.0)
GAUSS_WEIGHTS = 0.5 * GAUSS_WEIGHTS


class AssemblyError(ValueError):
    pass


def _constrain(op: sp.spmatrix, constrained: np.ndarray, unit_diagonal: bool) -> sp.csr_matrix:
    n = op.shape[0]
    keep = np.ones(n)
    keep[constrained] = 0.0
    P = sp.diags(keep)
    out = P @ op @ P
    if unit_diagonal:
        out = out + sp.diags(1.0 - keep)
    out = sp.csr_matrix(out)
    out.eliminate_zeros()
    out.sort_indices()
    return out


def assemble_dirichlet_form(mesh: Mesh) -> sp.csr_matrix:
    """Unconstrained P1 stiffness ``int_Omega grad phi_i . grad phi_j``."""
    p = mesh.vertices[mesh.triangles]
    area = mesh.signed_areas()
    bad = np.flatnonzero(~(area > 0))
    if bad.size:
        raise AssemblyError(f"degenerate triangle {bad[0]} (signed area {area[bad[0]]:.3e})")
    # gradients of barycentric coordinates: rotate opposite edge by 90 degrees
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    grads = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2.0 * area[:, None, None])
    local = area[:, None, None] * np.einsum("tik,tjk->tij", grads, grads)
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_vertices
    K = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    K.sort_indices()
    return K


def assemble_interior_stiffness(mesh: Mesh, dofs: DofMap) -> sp.csr_matrix:
    """P1 stiffness with constrained rows/columns replaced by the identity."""
    return _constrain(assemble_dirichlet_form(mesh), dofs.constrained_dofs, unit_diagonal=True)


def _gamma1_edges(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    sel = mesh.edge_tags == GAMMA1
    edges = mesh.boundary_edges[sel]
    h = mesh.edge_lengths[sel]
    return edges, h


def _edge_matrix(mesh: Mesh, local: np.ndarray, edges: np.ndarray) -> sp.csr_matrix:
    n = mesh.n_vertices
    rows = np.repeat(edges, 2, axis=1).ravel()
    cols = np.tile(edges, (1, 2)).ravel()
    M = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M.sort_indices()
    return M


def assemble_boundary_stiffness(mesh: Mesh, dofs: DofMap | None = None) -> sp.csr_matrix:
    """Unconstrained 1-D stiffness along GAMMA1: ``(1/h) [[1, -1], [-1, 1]]`` per edge."""
    edges, h = _gamma1_edges(mesh)
    if np.any(~(h > 0)):
        raise AssemblyError(f"zero-length GAMMA1 edge {np.flatnonzero(~(h > 0))[0]}")
    local = np.array([[1.0, -1.0], [-1.0, 1.0]])[None] / h[:, None, None]
    return _edge_matrix(mesh, local, edges)


def assemble_boundary_mass(mesh: Mesh) -> sp.csr_matrix:
    edges, h = _gamma1_edges(mesh)
    local = np.array([[2.0, 1.0], [1.0, 2.0]])[None] * (h / 6.0)[:, None, None]
    return _edge_matrix(mesh, local, edges)


def _edge_values(mesh: Mesh, u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    edges, h = _gamma1_edges(mesh)
    ua = u[edges[:, 0]]
    ub = u[edges[:, 1]]
    uq = ua[:, None] * (1.0 - GAUSS_POINTS) + ub[:, None] * GAUSS_POINTS
    return edges, h, uq


def boundary_p_integral(mesh: Mesh, u: np.ndarray, p: float) -> float:
    """``int_Gamma1 |u_h|^p`` (no 1/p factor)."""
    _, h, uq = _edge_values(mesh, np.asarray(u, dtype=float))
    return float(np.sum(h * (np.abs(uq) ** p @ GAUSS_WEIGHTS)))


def boundary_p_form(mesh: Mesh, u: np.ndarray, p: float, dofs: DofMap | None = None) -> np.ndarray:
    """Dual vector ``i -> int_Gamma1 |u_h|^{p-2} u_h phi_i``; zero at constrained dofs."""
    edges, h, uq = _edge_values(mesh, np.asarray(u, dtype=float))
    f = np.abs(uq) ** (p - 2.0) * uq * GAUSS_WEIGHTS
    loc_a = h * (f @ (1.0 - GAUSS_POINTS))
    loc_b = h * (f @ GAUSS_POINTS)
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, edges[:, 0], loc_a)
    np.add.at(out, edges[:, 1], loc_b)
    if dofs is None:
        dofs = build_dof_map(mesh)
    out[dofs.constrained_dofs] = 0.0
    return out


def boundary_weighted_mass(mesh: Mesh, weight_at_quad: np.ndarray) -> sp.csr_matrix:
    """Edge mass matrix with a weight given at the Gauss points of each GAMMA1 edge."""
    edges, h = _gamma1_edges(mesh)
    phi = np.stack([1.0 - GAUSS_POINTS, GAUSS_POINTS])  # (2, q)
    w = weight_at_quad * GAUSS_WEIGHTS * h[:, None]  # (e, q)
    local = np.einsum("eq,aq,bq->eab", w, phi, phi)
    return _edge_matrix(mesh, local, edges)


def export_triplets(op: sp.spmatrix) -> str:
    coo = sp.coo_matrix(op)
    order = np.lexsort((coo.col, coo.row))
    return "".join(f"{i} {j} {float(v)!r}\n" for i, j, v in zip(coo.row[order].tolist(), coo.col[order].tolist(), coo.data[order]))


@dataclass(eq=False)
class AssembledSystem:
    """All u-independent operators for one (mesh, p); nonlinear terms evaluated on demand."""

    mesh: Mesh
    dofs: DofMap
    p: float
    interior_stiffness: sp.csr_matrix
    boundary_stiffness: sp.csr_matrix
    boundary_mass: sp.csr_matrix
    _cache: dict = field(default_factory=dict, repr=False)

    @cached_property
    def h1_operator(self) -> sp.csr_matrix:
        """Gram matrix of the (u, v)_{H1} inner product, identity on constrained rows."""
        S = _constrain(self.boundary_stiffness, self.dofs.constrained_dofs, unit_diagonal=False)
        return sp.csr_matrix(self.interior_stiffness + S)

    @cached_property
    def h1_factor(self) -> SPDFactor:
        return SPDFactor(self.h1_operator)

    @cached_property
    def free_mask(self) -> np.ndarray:
        return self.dofs.free_mask

    def constrain(self, u: np.ndarray) -> np.ndarray:
        u = np.array(u, dtype=float)
        u[self.dofs.constrained_dofs] = 0.0
        return u

    def p_integral(self, u: np.ndarray) -> float:
        return boundary_p_integral(self.mesh, u, self.p)

    def p_form(self, u: np.ndarray) -> np.ndarray:
        return boundary_p_form(self.mesh, u, self.p, self.dofs)

    def h1_inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(u @ (self.h1_operator @ v))

    def hessian(self, u: np.ndarray) -> sp.csr_matrix:
        """Exact second derivative of I at u: H1 Gram matrix minus (p-1)|u|^{p-2} boundary mass."""
        _, _, uq = _edge_values(self.mesh, u)
        W = boundary_weighted_mass(self.mesh, (self.p - 1.0) * np.abs(uq) ** (self.p - 2.0))
        W = _constrain(W, self.dofs.constrained_dofs, unit_diagonal=False)
        return sp.csr_matrix(self.h1_operator - W)


def assemble_system(mesh: Mesh, p: float, dofs: DofMap | None = None) -> AssembledSystem:
    if not p > 2:
        raise ValueError(f"exponent p must exceed 2, got {p}")
    if dofs is None:
        dofs = build_dof_map(mesh)
    return AssembledSystem(
        mesh=mesh,
        dofs=dofs,
        p=float(p),
        interior_stiffness=assemble_interior_stiffness(mesh, dofs),
        boundary_stiffness=assemble_boundary_stiffness(mesh, dofs),
        boundary_mass=assemble_boundary_mass(mesh),
    )
