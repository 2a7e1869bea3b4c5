"""Energy functional, Nehari functional, ray analysis and the best trace constant.

Notation used throughout: ``N(u) = ||u||_{H1}^2`` (interior plus tangential
Dirichlet energy) and ``P(u) = int_Gamma1 |u|^p``, so that

    I(u) = N/2 - P/p,      K(u) = N - P.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .assembly import AssembledSystem

log = logging.getLogger(__name__)


class DomainError(ValueError):
    """Ray quantities requested for a function with zero GAMMA1 trace."""


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, last_iterate=None, diagnostics: dict | None = None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.diagnostics = diagnostics or {}


@dataclass
class EnergyReport:
    energy_I: float
    nehari_K: float
    h1_norm: float
    trace_p_norm: float
    weak_residual: float
    lambda1_residual: float
    lambda2_residual: float

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in self.__dict__.items()}


@dataclass
class DepthEstimate:
    """Discrete (mesh-dependent) depth of the potential well and its constants."""

    B: float
    lambda1: float
    lambda2: float
    depth_d: float
    maximizer: np.ndarray
    p: float
    iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "B": float(self.B),
            "lambda1": float(self.lambda1),
            "lambda2": float(self.lambda2),
            "depth_d": float(self.depth_d),
            "depth_from_lambda2": float(depth_from_lambda2(self.lambda2, self.p)),
            "p": float(self.p),
            "iterations": int(self.iterations),
            "mesh_dependent": True,
        }


def h1_norm_sq(system: AssembledSystem, u: np.ndarray) -> float:
    return system.h1_inner(u, u)


def energy(system: AssembledSystem, u: np.ndarray) -> float:
    return 0.5 * h1_norm_sq(system, u) - system.p_integral(u) / system.p


def energy_dual(system: AssembledSystem, u: np.ndarray) -> np.ndarray:
    """Dual vector of I'(u); zero at constrained dofs."""
    g = system.h1_operator @ u - system.p_form(u)
    g[system.dofs.constrained_dofs] = 0.0
    return g


def energy_gradient(system: AssembledSystem, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(dual, riesz)``; ``riesz`` represents I'(u) in the H1 inner product."""
    dual = energy_dual(system, u)
    return dual, system.h1_factor.solve(dual)


def weak_residual(system: AssembledSystem, u: np.ndarray) -> float:
    """Euclidean norm of the weak-form residual tested against every free hat function."""
    return float(np.linalg.norm(energy_dual(system, u)[system.free_mask]))


def nehari_value(system: AssembledSystem, u: np.ndarray) -> float:
    return h1_norm_sq(system, u) - system.p_integral(u)


def ray_scaling(system: AssembledSystem, u: np.ndarray) -> tuple[float, float]:
    """Maximizer ``lambda_u`` of ``t -> I(t u)`` on ``t > 0`` and the maximum value."""
    p = system.p
    N = h1_norm_sq(system, u)
    P = system.p_integral(u)
    if not P > 0:
        raise DomainError("u vanishes on GAMMA1: I(t u) is unbounded above along the ray")
    lam = N ** (1.0 / (p - 2.0)) * P ** (-1.0 / (p - 2.0))
    ray_max = (0.5 - 1.0 / p) * (N / P ** (2.0 / p)) ** (p / (p - 2.0))
    return float(lam), float(ray_max)


def ray_energy(N: float, P: float, p: float, t):
    """I(t u) as a polynomial in t, from N = ||u||^2 and P = ||u||_p^p."""
    t = np.asarray(t, dtype=float)
    return 0.5 * N * t**2 - P * t**p / p


def lambdas_from_B(B: float, p: float) -> tuple[float, float]:
    return B ** (-p / (p - 2.0)), B ** (-2.0 / (p - 2.0))


def depth_from_lambda1(lambda1: float, p: float) -> float:
    return (0.5 - 1.0 / p) * lambda1**2


def depth_from_lambda2(lambda2: float, p: float) -> float:
    return (0.5 - 1.0 / p) * lambda2**p


def trace_quotient(system: AssembledSystem, u: np.ndarray) -> float:
    """``||u||_{p,Gamma1} / ||u||_{H1}``."""
    return system.p_integral(u) ** (1.0 / system.p) / np.sqrt(h1_norm_sq(system, u))


def random_boundary_lift(system: AssembledSystem, rng: np.random.Generator) -> np.ndarray:
    """Discrete harmonic extension of random GAMMA1 nodal values."""
    from .dtn import HarmonicExtensionSolver

    v = np.zeros(system.mesh.n_vertices)
    idx = system.dofs.free_boundary_dofs
    v[idx] = rng.standard_normal(idx.size)
    return HarmonicExtensionSolver.for_system(system).extend(v)


def _quotient_ascent(system, u, *, max_iters, rtol_q, gtol, window=10):
    """Maximize Q(u) = P^{1/p} / N^{1/2} by normalized Riesz-gradient ascent with BB steps."""
    p = system.p
    A = system.h1_operator
    fac = system.h1_factor

    def state(u):
        N = float(u @ (A @ u))
        P = system.p_integral(u)
        Q = P ** (1.0 / p) / np.sqrt(N)
        # Riesz gradient of Q; the dual of dP/p is the p-form
        grad = Q * (fac.solve(system.p_form(u)) / P - u / N)
        return Q, grad

    u = u / np.sqrt(float(u @ (A @ u)))
    Q, g = state(u)
    history = [Q]
    step = 1.0 / max(Q, 1e-300)
    prev_u = prev_g = None
    for it in range(1, max_iters + 1):
        if prev_u is not None:
            du, dg = u - prev_u, g - prev_g
            num = float(du @ (A @ du))
            den = float(du @ (A @ dg))
            if den < 0:
                step = num / -den
        gnorm = np.sqrt(float(g @ (A @ g)))
        t = step
        for _ in range(60):
            cand = u + t * g
            cand = cand / np.sqrt(float(cand @ (A @ cand)))
            Qc, gc = state(cand)
            if Qc >= Q:
                break
            t *= 0.5
        else:
            # no representable increase left
            return u, Q, it, gnorm <= gtol * Q
        prev_u, prev_g = u, g
        u, Q, g = cand, Qc, gc
        history.append(Q)
        gnorm = np.sqrt(float(g @ (A @ g)))
        stalled = len(history) > window and (Q - history[-1 - window]) <= rtol_q * Q
        if stalled and gnorm <= gtol * Q:
            return u, Q, it, True
    return u, Q, max_iters, False


def compute_depth(system: AssembledSystem, config=None) -> DepthEstimate:
    """Best trace constant B by multistart quotient ascent, then lambda1, lambda2 and d."""
    from .solvers import SolverConfig

    config = config or SolverConfig(p=system.p)
    rng = np.random.default_rng(config.rng_seed)
    best = None
    total = 0
    for start in range(max(1, config.multistart_count)):
        u0 = random_boundary_lift(system, rng)
        u, Q, its, ok = _quotient_ascent(
            system, u0, max_iters=config.max_iters, rtol_q=config.depth_rtol, gtol=config.depth_gtol
        )
        total += its
        log.debug("depth start %d: B=%.12g after %d iterations (converged=%s)", start, Q, its, ok)
        if ok and (best is None or Q > best[1]):
            best = (u, Q)
    if best is None:
        raise ConvergenceError("trace-quotient ascent did not converge", last_iterate=u, diagnostics={"B": Q})
    u, B = best
    p = system.p
    lam1, lam2 = lambdas_from_B(B, p)
    lam_u, _ = ray_scaling(system, u)
    u = lam_u * u
    if u[system.dofs.free_boundary_dofs].sum() < 0:
        u = -u
    return DepthEstimate(
        B=B, lambda1=lam1, lambda2=lam2, depth_d=depth_from_lambda1(lam1, p), maximizer=u, p=p, iterations=total
    )


def solution_report(system: AssembledSystem, u: np.ndarray, depth: DepthEstimate | None = None) -> EnergyReport:
    N = h1_norm_sq(system, u)
    P = system.p_integral(u)
    h1 = np.sqrt(N)
    tp = P ** (1.0 / system.p)
    lam1 = depth.lambda1 if depth is not None else np.nan
    lam2 = depth.lambda2 if depth is not None else np.nan
    return EnergyReport(
        energy_I=0.5 * N - P / system.p,
        nehari_K=N - P,
        h1_norm=h1,
        trace_p_norm=tp,
        weak_residual=weak_residual(system, u),
        lambda1_residual=abs(h1 - lam1),
        lambda2_residual=abs(tp - lam2),
    )
