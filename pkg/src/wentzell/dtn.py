"""Harmonic extension, the Dirichlet-to-Neumann form and the boundary-only energy.

Discretely, the Dirichlet operator maps boundary nodal values ``v`` to the
nodal field that equals ``v`` on every boundary vertex and is discrete
harmonic (stiffness residual zero) at every interior vertex. One sparse
factorization of the interior-interior stiffness block serves every
extension.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import functional as fn
from .assembly import AssembledSystem, assemble_dirichlet_form
from .linalg import SPDFactor
from .mesh import DofMap, Mesh, build_dof_map


class HarmonicExtensionSolver:
    def __init__(self, mesh: Mesh, dofs: DofMap | None = None, stiffness: sp.spmatrix | None = None):
        self.mesh = mesh
        self.dofs = dofs if dofs is not None else build_dof_map(mesh)
        self.stiffness = sp.csr_matrix(stiffness if stiffness is not None else assemble_dirichlet_form(mesh))
        on_boundary = np.zeros(mesh.n_vertices, dtype=bool)
        on_boundary[np.unique(mesh.boundary_edges)] = True
        self.boundary = np.flatnonzero(on_boundary)
        self.interior = np.flatnonzero(~on_boundary)
        K = self.stiffness
        self._K_ib = K[self.interior][:, self.boundary]
        self._factor = SPDFactor(K[self.interior][:, self.interior]) if self.interior.size else None

    @classmethod
    def for_system(cls, system: AssembledSystem) -> "HarmonicExtensionSolver":
        solver = system._cache.get("harmonic_extension")
        if solver is None:
            solver = cls(system.mesh, system.dofs)
            system._cache["harmonic_extension"] = solver
        return solver

    def restrict(self, u: np.ndarray) -> np.ndarray:
        """Nodal field keeping only boundary values (interior zeroed)."""
        out = np.zeros(self.mesh.n_vertices)
        out[self.boundary] = np.asarray(u)[self.boundary]
        out[self.dofs.constrained_dofs] = 0.0
        return out

    def extend(self, v: np.ndarray) -> np.ndarray:
        """Harmonic extension of the boundary values of the nodal vector ``v``."""
        u = self.restrict(v)
        if self._factor is not None:
            u[self.interior] = self._factor.solve(-(self._K_ib @ u[self.boundary]))
        return u


def harmonic_extension(solver: HarmonicExtensionSolver, v: np.ndarray) -> np.ndarray:
    return solver.extend(v)


def dtn_form(solver: HarmonicExtensionSolver, v: np.ndarray, w: np.ndarray) -> float:
    """``<A v, w> = int_Omega grad(Dv) . grad(Dw)``."""
    return float(solver.extend(v) @ (solver.stiffness @ solver.extend(w)))


def dtn_pairing_with_lift(solver: HarmonicExtensionSolver, v: np.ndarray, lift: np.ndarray) -> float:
    """``int_Omega grad(Dv) . grad(phi)`` for an arbitrary nodal field ``phi``."""
    return float(solver.extend(v) @ (solver.stiffness @ lift))


def boundary_energy(solver: HarmonicExtensionSolver, system: AssembledSystem, v: np.ndarray) -> float:
    """``J(v) = 1/2 <A v, v> + 1/2 int_Gamma1 |grad_Gamma v|^2 - 1/p int_Gamma1 |v|^p``.

    Evaluated from the DtN form and the boundary operators, not through ``I``,
    so that ``J = I o D`` is a genuine identity to check.
    """
    v = solver.restrict(v)
    u = solver.extend(v)
    dirichlet = float(u @ (solver.stiffness @ u))
    tangential = float(v @ (system.boundary_stiffness @ v))
    return 0.5 * (dirichlet + tangential) - system.p_integral(v) / system.p


def boundary_gradient(solver: HarmonicExtensionSolver, system: AssembledSystem, v: np.ndarray) -> np.ndarray:
    """Dual vector of J'(v), supported on boundary vertices.

    For harmonic ``u = Dv`` the I-gradient already annihilates interior test
    functions, so J'(v) is the boundary restriction of I'(Dv).
    """
    return solver.restrict(fn.energy_dual(system, solver.extend(v)))


def harmonic_projection(solver: HarmonicExtensionSolver, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    harmonic = solver.extend(u)
    return harmonic, np.asarray(u, dtype=float) - harmonic
