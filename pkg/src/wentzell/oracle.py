"""Closed-form radial critical points on an annulus.

With ``u(r) = c ln(r / r0)`` the interior equation and the inner Dirichlet
condition hold; on the outer circle the trace is constant, so the tangential
Laplacian drops out and the boundary condition reduces to

    u'(R) = c / R = (c ln(R / r0))^{p-1},

whose unique positive root is ``c = [R ln(R/r0)^{p-1}]^{-1/(p-2)}``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .mesh import Mesh


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class RadialSolution:
    c: float
    r0: float
    R: float
    p: float
    energy_I: float
    h1_norm_sq: float
    trace_p_norm_p: float

    def profile(self, r):
        return self.c * np.log(np.asarray(r) / self.r0)

    def boundary_residual(self, c: float | None = None) -> float:
        """``u'(R) - u(R)^{p-1}`` for amplitude ``c`` (defaults to the solution's)."""
        c = self.c if c is None else c
        L = np.log(self.R / self.r0)
        return c / self.R - (c * L) ** (self.p - 1.0)

    def to_dict(self) -> dict:
        return asdict(self)


def radial_solution(r0: float, R: float, p: float) -> RadialSolution:
    if not (0 < r0 < R):
        raise OracleError(f"need 0 < r0 < R, got r0={r0}, R={R}")
    if not p > 2:
        raise OracleError(f"need p > 2, got {p}")
    L = np.log(R / r0)
    c = (R * L ** (p - 1.0)) ** (-1.0 / (p - 2.0))
    h1 = 2.0 * np.pi * c**2 * L
    trace = 2.0 * np.pi * R * (c * L) ** p
    energy = 0.5 * h1 - trace / p
    return RadialSolution(c=c, r0=r0, R=R, p=p, energy_I=energy, h1_norm_sq=h1, trace_p_norm_p=trace)


def radial_interpolant(mesh: Mesh, sol: RadialSolution, dofs=None, tol: float = 1e-9) -> np.ndarray:
    r = np.hypot(mesh.vertices[:, 0], mesh.vertices[:, 1])
    if abs(r.min() - sol.r0) > tol * max(1.0, sol.r0) or abs(r.max() - sol.R) > tol * max(1.0, sol.R):
        raise OracleError(
            f"mesh radii [{r.min():.12g}, {r.max():.12g}] do not match annulus [{sol.r0}, {sol.R}]"
        )
    u = sol.profile(r)
    if dofs is not None:
        u[dofs.constrained_dofs] = 0.0
    else:
        u[np.abs(r - sol.r0) <= tol * max(1.0, sol.r0)] = 0.0
    return u


def radial_symmetrizer(mesh: Mesh, tol: float = 1e-9):
    """Projector averaging nodal values over vertices at equal distance from the origin.

    On a mesh invariant under a discrete rotation group (e.g. the structured
    annulus) this is the group average, hence an orthogonal projection onto
    the rotation-invariant fields in any invariant inner product.
    """
    r = np.hypot(mesh.vertices[:, 0], mesh.vertices[:, 1])
    order = np.argsort(r)
    jumps = np.diff(r[order]) > tol * max(r.max(), 1.0)
    ring = np.empty(r.size, dtype=np.int64)
    ring[order] = np.concatenate([[0], np.cumsum(jumps)])
    counts = np.bincount(ring)

    def project(u: np.ndarray) -> np.ndarray:
        return (np.bincount(ring, weights=u) / counts)[ring]

    return project
