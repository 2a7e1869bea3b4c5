"""Sparse factorizations shared by the functional, DtN and solver layers."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    """Linear solve failed: singular, indefinite, or inaccurate."""


class SPDFactor:
    """Sparse LDL^T-style factorization of an SPD matrix via symmetric-mode SuperLU.

    With diagonal pivoting disabled the U diagonal carries the pivots of a
    symmetric elimination, so a nonpositive pivot flags indefiniteness.
    """

    def __init__(self, op: sp.spmatrix, check_definite: bool = True, rtol: float = 1e-10):
        self.op = sp.csc_matrix(op)
        self.rtol = rtol
        try:
            self._lu = spla.splu(
                self.op,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc
        pivots = self._lu.U.diagonal()
        if check_definite and not np.all(pivots > 0):
            raise SolverError(f"operator is not positive definite ({np.sum(pivots <= 0)} nonpositive pivots)")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        nrm = np.linalg.norm(rhs)
        if nrm == 0.0:
            return np.zeros_like(rhs)
        x = self._lu.solve(rhs)
        res = np.linalg.norm(self.op @ x - rhs)
        if not np.isfinite(res):
            raise SolverError("linear solve produced non-finite values")
        if res > self.rtol * nrm:
            # one step of iterative refinement before giving up
            x = x + self._lu.solve(rhs - self.op @ x)
            res = np.linalg.norm(self.op @ x - rhs)
            if res > self.rtol * nrm:
                raise SolverError(f"residual {res:.3e} exceeds {self.rtol:.0e} * |rhs| = {self.rtol * nrm:.3e}")
        return x


def solve_linear_spd(op: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    """Solve ``op x = rhs`` for symmetric positive definite ``op``."""
    return SPDFactor(op).solve(rhs)


def solve_linear(op: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    """General sparse solve, used for indefinite Newton systems."""
    try:
        lu = spla.splu(sp.csc_matrix(op))
    except RuntimeError as exc:
        raise SolverError(f"factorization failed: {exc}") from exc
    x = lu.solve(np.asarray(rhs, dtype=float))
    if not np.all(np.isfinite(x)):
        raise SolverError("linear solve produced non-finite values")
    return x
