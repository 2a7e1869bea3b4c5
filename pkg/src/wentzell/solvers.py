"""Critical-point solvers: mountain pass, Nehari descent, Newton polish, deflation.

All solvers run on a small problem interface so the same code drives the
full-space formulation (nodal fields on the whole mesh) and the boundary
formulation (boundary values, energy evaluated through the harmonic
extension).
"""
from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import functional as fn
from .assembly import GAUSS_WEIGHTS, AssembledSystem, _edge_values
from .dtn import HarmonicExtensionSolver
from .functional import ConvergenceError, DomainError, EnergyReport
from .linalg import SolverError, solve_linear, solve_linear_spd

log = logging.getLogger(__name__)

__all__ = [
    "Backend",
    "CriticalPoint",
    "DeflationParams",
    "DescentParams",
    "SolverConfig",
    "deflated_continue",
    "find_critical_points",
    "mountain_pass",
    "nehari_minimize",
    "newton_polish",
    "solve_linear_spd",
]


class Backend(str, enum.Enum):
    FULL_SPACE = "FULL_SPACE"
    BOUNDARY_DTN = "BOUNDARY_DTN"


@dataclass
class DescentParams:
    initial_step: float = 1.0
    backtrack: float = 0.5
    armijo: float = 1e-4


@dataclass
class DeflationParams:
    shift: float = 1.0
    power: float = 2.0


@dataclass
class SolverConfig:
    p: float = 4.0
    grad_tol: float = 1e-8
    max_iters: int = 5000
    path_points: int = 24
    descent: DescentParams = field(default_factory=DescentParams)
    deflation: DeflationParams = field(default_factory=DeflationParams)
    multistart_count: int = 4
    rng_seed: int = 0
    # relative H1-dual gradient norm at which descent hands over to Newton
    newton_switch: float = 1e-3
    newton_max_iters: int = 60
    depth_rtol: float = 1e-10
    depth_gtol: float = 1e-8
    max_seeds: int = 60

    def __post_init__(self):
        if isinstance(self.descent, dict):
            self.descent = DescentParams(**self.descent)
        if isinstance(self.deflation, dict):
            self.deflation = DeflationParams(**self.deflation)
        if not self.p > 2:
            raise ValueError(f"p must exceed 2, got {self.p}")
        positive = {
            "grad_tol": self.grad_tol,
            "newton_switch": self.newton_switch,
            "depth_rtol": self.depth_rtol,
            "depth_gtol": self.depth_gtol,
            "initial_step": self.descent.initial_step,
            "armijo": self.descent.armijo,
        }
        for name, val in positive.items():
            if not val > 0:
                raise ValueError(f"{name} must be positive, got {val}")
        if not 0 < self.descent.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.path_points < 16:
            raise ValueError("path_points must be at least 16")
        if self.deflation.shift < 0 or self.deflation.power < 1:
            raise ValueError("deflation needs shift >= 0 and power >= 1")
        if self.max_iters < 1 or self.multistart_count < 1:
            raise ValueError("max_iters and multistart_count must be positive")


@dataclass
class CriticalPoint:
    u: np.ndarray
    report: EnergyReport
    iterations: int
    backend: Backend = Backend.FULL_SPACE
    path_max_history: list = field(default_factory=list, repr=False)

    @property
    def energy(self) -> float:
        return self.report.energy_I


class _FullSpace:
    backend = Backend.FULL_SPACE

    def __init__(self, system: AssembledSystem):
        self.system = system

    def from_full(self, u):
        return self.system.constrain(u)

    def to_full(self, x):
        return x

    def energy(self, x):
        return fn.energy(self.system, x)

    def dual(self, x):
        return fn.energy_dual(self.system, x)

    def riesz(self, g):
        return self.system.h1_factor.solve(g)

    def inner(self, x, y):
        return self.system.h1_inner(x, y)

    def residual(self, x):
        return fn.weak_residual(self.system, x)

    def newton_direction(self, x, g):
        return _newton_solve(self.system, x, g)


class _Boundary:
    backend = Backend.BOUNDARY_DTN

    def __init__(self, system: AssembledSystem):
        self.system = system
        self.ext = HarmonicExtensionSolver.for_system(system)

    def from_full(self, u):
        return self.ext.restrict(u)

    def to_full(self, x):
        return self.ext.extend(x)

    def energy(self, x):
        return fn.energy(self.system, self.ext.extend(x))

    def dual(self, x):
        return self.ext.restrict(fn.energy_dual(self.system, self.ext.extend(x)))

    def riesz(self, g):
        # rhs vanishes at interior rows, so the solution is discrete harmonic
        return self.ext.restrict(self.system.h1_factor.solve(g))

    def inner(self, x, y):
        ex = self.ext.extend(x)
        return self.system.h1_inner(ex, ex if y is x else self.ext.extend(y))

    def residual(self, x):
        return fn.weak_residual(self.system, self.ext.extend(x))

    def newton_direction(self, x, g):
        # Schur complement of the full Hessian onto boundary values
        return self.ext.restrict(_newton_solve(self.system, self.ext.extend(x), g))


def _problem(system, backend):
    backend = Backend(backend)
    return _FullSpace(system) if backend is Backend.FULL_SPACE else _Boundary(system)


def _newton_solve(system: AssembledSystem, u: np.ndarray, g: np.ndarray) -> np.ndarray:
    H = system.hessian(u)
    try:
        return solve_linear(H, -g)
    except SolverError:
        # singular Hessian: Levenberg shift toward the H1 Gram matrix
        shift = 2.0 * abs(min(H.diagonal().min(), 0.0)) + 1e-8
        log.debug("singular Newton system, shifting by %.3e", shift)
        return solve_linear(H + shift * system.h1_operator, -g)


def _report(system, u, depth=None) -> EnergyReport:
    return fn.solution_report(system, u, depth)


def newton_polish(problem, x, tol, max_iters, symmetry=None, extra_steps=2):
    """Newton on I' = 0 with a residual-norm backtracking line search.

    Once the residual is below ``tol``, up to ``extra_steps`` further full
    Newton steps are taken while they keep reducing it; quadratic convergence
    makes these nearly free and brings the Nehari algebra to round-off.
    """
    res = problem.residual(x)
    for it in range(max_iters):
        if res <= tol:
            return _tighten(problem, x, res, extra_steps, symmetry), it, True
        g = problem.dual(x)
        d = problem.newton_direction(x, g)
        if symmetry is not None:
            d = symmetry(d)
        t = 1.0
        while True:
            cand = x + t * d
            rc = problem.residual(cand)
            if rc < (1.0 - 1e-4 * t) * res or t < 1e-6:
                break
            t *= 0.5
        if not np.isfinite(rc):
            return x, it, False
        x, res = cand, rc
    return x, max_iters, res <= tol


def _tighten(problem, x, res, steps, symmetry=None):
    for _ in range(steps):
        try:
            d = problem.newton_direction(x, problem.dual(x))
        except SolverError:
            break
        if symmetry is not None:
            d = symmetry(d)
        cand = x + d
        rc = problem.residual(cand)
        if not rc < 0.5 * res:
            break
        x, res = cand, rc
    return x


def _seed_from(system, seed, rng):
    if seed is None or isinstance(seed, np.random.Generator):
        rng = seed if isinstance(seed, np.random.Generator) else rng
        return _smooth_boundary_seed(system, rng, n_bumps=1)
    return np.asarray(seed, dtype=float)


def _capped_descent_step(problem, x, e, r, gn2, cap, dp):
    """Armijo backtracking along -r with the displacement norm capped at ``cap``."""
    rn = np.sqrt(max(problem.inner(r, r), 0.0))
    s = dp.initial_step
    if rn > 0 and s * rn > cap:
        s = cap / rn
    while True:
        cand = x - s * r
        ec = problem.energy(cand)
        if ec <= e - dp.armijo * s * gn2 or s < 1e-14:
            return cand, ec
        s *= dp.backtrack


def _segment_max(problem, a, b, n_samples=33):
    """Maximum of I on the segment ``a + t (b - a)``, ``t`` in [0, 1]; returns ``(value, t)``.

    The H1 part is an exact quadratic in ``t``; the boundary p-integral is
    evaluated at the Gauss points, vectorized over samples, then refined by a
    bounded scalar search around the best sample.
    """
    system = problem.system
    d = b - a
    # extend once; the extension is linear, so the quadratic coefficients follow
    A = system.h1_operator
    fa, fd = problem.to_full(a), problem.to_full(d)
    Afd = A @ fd
    naa, nad, ndd = float(fa @ (A @ fa)), float(fa @ Afd), float(fd @ Afd)
    _, hq, ua = _edge_values(system.mesh, a)
    _, _, ud = _edge_values(system.mesh, d)
    p = system.p
    wq = hq[:, None] * GAUSS_WEIGHTS[None, :]

    def energy(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        N = naa + 2.0 * t * nad + t**2 * ndd
        P = np.einsum("eq,teq->t", wq, np.abs(ua[None] + t[:, None, None] * ud[None]) ** p)
        return 0.5 * N - P / p

    ts = np.linspace(0.0, 1.0, n_samples)
    es = energy(ts)
    k = int(np.argmax(es))
    if 0 < k < n_samples - 1:
        res = minimize_scalar(
            lambda t: -energy(t)[0], bounds=(ts[k - 1], ts[k + 1]), method="bounded", options={"xatol": 1e-12}
        )
        if -res.fun > es[k]:
            return float(-res.fun), float(res.x)
    return float(es[k]), float(ts[k])


def _mountain_pass_descent(problem, x0, config, symmetry, history):
    """Path-deformation descent (Choi-McKenna style) from 0 to a negative-energy endpoint.

    The path is the polyline through ``nodes``; its maximum is taken over the
    whole polyline, segment by segment. Each iteration makes the maximizer a
    node, moves it against the Riesz gradient (component along the local
    tangent removed, displacement capped at half the nominal spacing) and
    backtracks until the two affected segments stay below the old maximum, so
    the path maximum never increases.
    """
    lam, _ = fn.ray_scaling(problem.system, problem.to_full(x0))
    end = 2.0 * lam * x0
    if not problem.energy(end) < 0:
        raise ConvergenceError("ray endpoint does not have negative energy", last_iterate=end)
    nodes = [t * end for t in np.linspace(0.0, 1.0, config.path_points)]
    seg = [_segment_max(problem, nodes[k - 1], nodes[k]) for k in range(1, len(nodes))]
    h = np.sqrt(problem.inner(end, end)) / (config.path_points - 1)
    cap = 4 * config.path_points
    dp = config.descent

    def split(k, t):
        """Insert a node at parameter t of segment k (between nodes k and k+1)."""
        a, b = nodes[k], nodes[k + 1]
        mid = a + t * (b - a)
        nodes.insert(k + 1, mid)
        seg[k : k + 1] = [_segment_max(problem, a, mid), _segment_max(problem, mid, b)]

    for it in range(1, config.max_iters + 1):
        k = int(np.argmax([v for v, _ in seg]))
        emax, t = seg[k]
        if 1e-9 < t < 1.0 - 1e-9:
            split(k, t)
            j = k + 1
        else:
            j = k + 1 if t >= 0.5 else k
        if j == 0 or j == len(nodes) - 1:
            raise ConvergenceError("mountain-pass maximum reached a path endpoint", last_iterate=nodes[j])
        x = nodes[j]
        emax = max(emax, problem.energy(x))
        history.append(emax)
        if emax <= 0:
            raise ConvergenceError("mountain-pass path collapsed to zero", last_iterate=x)
        g = problem.dual(x)
        r = problem.riesz(g)
        if symmetry is not None:
            r = symmetry(r)
        gn = np.sqrt(max(float(g @ r), 0.0))
        xn = np.sqrt(problem.inner(x, x))
        if gn <= config.newton_switch * xn:
            return x, it
        tau = nodes[j + 1] - nodes[j - 1]
        tt = problem.inner(tau, tau)
        if tt > 0:
            r = r - (problem.inner(r, tau) / tt) * tau
        gn2 = problem.inner(r, r)
        rn = np.sqrt(gn2)
        s = dp.initial_step if rn * dp.initial_step <= 0.5 * h else 0.5 * h / rn
        moved = False
        while s * rn > 1e-14 * max(xn, 1.0):
            cand = x - s * r
            ec = problem.energy(cand)
            if ec <= emax - dp.armijo * s * gn2:
                left = _segment_max(problem, nodes[j - 1], cand)
                right = _segment_max(problem, cand, nodes[j + 1])
                if left[0] <= emax and right[0] <= emax:
                    nodes[j] = cand
                    seg[j - 1], seg[j] = left, right
                    moved = True
                    break
            s *= dp.backtrack
        if not moved:
            # refine around the stuck node; the polyline itself is unchanged
            split(j, 0.5)
            split(j - 1, 0.5)
            if len(nodes) > 4 * cap:
                raise ConvergenceError("mountain-pass descent stagnated", last_iterate=x)
        for kk in (j, j - 1):
            if kk + 1 < len(nodes) and np.sqrt(problem.inner(nodes[kk + 1] - nodes[kk], nodes[kk + 1] - nodes[kk])) > h:
                split(kk, 0.5)
        while len(nodes) > cap:
            jm = int(np.argmax([v for v, _ in seg]))
            best = None
            for kk in range(1, len(nodes) - 1):
                if abs(kk - jm) <= 2:
                    continue
                merged = _segment_max(problem, nodes[kk - 1], nodes[kk + 1])
                if merged[0] <= seg[jm][0] and (best is None or problem.energy(nodes[kk]) < best[1]):
                    best = (kk, problem.energy(nodes[kk]), merged)
            if best is None:
                break
            kk, _, merged = best
            del nodes[kk]
            seg[kk - 1 : kk + 1] = [merged]
    raise ConvergenceError(
        f"mountain pass did not reach the Newton switch in {config.max_iters} iterations",
        last_iterate=nodes[int(np.argmax([v for v, _ in seg]))],
    )


def _finish(system, problem, x, config, iterations, history, symmetry=None, depth=None, require_positive=True):
    x, nits, ok = newton_polish(problem, x, config.grad_tol, config.newton_max_iters, symmetry)
    u = problem.to_full(x)
    report = _report(system, u, depth)
    if not ok:
        raise ConvergenceError(
            f"Newton polish stalled at residual {report.weak_residual:.3e}", last_iterate=u, diagnostics=report.to_dict()
        )
    if require_positive and not report.energy_I > 0:
        raise ConvergenceError("converged to the trivial solution", last_iterate=u, diagnostics=report.to_dict())
    return CriticalPoint(u=u, report=report, iterations=iterations + nits, backend=problem.backend, path_max_history=history)


def mountain_pass(
    system: AssembledSystem,
    config: SolverConfig,
    seed=None,
    backend: Backend = Backend.FULL_SPACE,
    symmetry=None,
    depth=None,
) -> CriticalPoint:
    """Least-energy critical point via the mountain-pass path algorithm plus Newton polish.

    ``seed`` is a nodal field with nonzero GAMMA1 trace, an RNG, or None (uses
    ``config.rng_seed``). ``symmetry`` optionally projects iterates onto an
    invariant subspace (e.g. ring averages on an annulus).
    """
    problem = _problem(system, backend)
    rng = np.random.default_rng(config.rng_seed)
    last = None
    for attempt in range(config.multistart_count):
        x0 = problem.from_full(_seed_from(system, seed if attempt == 0 else None, rng))
        if symmetry is not None:
            x0 = symmetry(x0)
        history: list[float] = []
        try:
            x, its = _mountain_pass_descent(problem, x0, config, symmetry, history)
            return _finish(system, problem, x, config, its, history, symmetry, depth)
        except (ConvergenceError, DomainError) as exc:
            log.info("mountain pass attempt %d failed: %s", attempt, exc)
            last = exc
    raise ConvergenceError(f"mountain pass failed after {config.multistart_count} attempts: {last}")


def nehari_minimize(system: AssembledSystem, config: SolverConfig, seed=None, backend=Backend.FULL_SPACE, depth=None) -> CriticalPoint:
    """Minimize I on the Nehari set by projected gradient descent, then Newton polish.

    Each step moves against the Riesz gradient and rescales back onto
    ``{K = 0}`` with the ray maximizer, so the iterate energy equals the ray
    maximum ``max_t I(t u)``.
    """
    problem = _problem(system, backend)
    rng = np.random.default_rng(config.rng_seed + 7919)
    x = problem.from_full(_seed_from(system, seed, rng))

    def project(x):
        lam, _ = fn.ray_scaling(system, problem.to_full(x))
        return lam * x

    x = project(x)
    e = problem.energy(x)
    dp = config.descent
    for it in range(1, config.max_iters + 1):
        g = problem.dual(x)
        r = problem.riesz(g)
        gn2 = float(g @ r)
        if np.sqrt(max(gn2, 0.0)) <= config.newton_switch * np.sqrt(problem.inner(x, x)):
            return _finish(system, problem, x, config, it, [], depth=depth)
        s = dp.initial_step
        while True:
            cand = project(x - s * r)
            ec = problem.energy(cand)
            if ec <= e - dp.armijo * s * gn2 or s < 1e-12:
                break
            s *= dp.backtrack
        x, e = cand, ec
    raise ConvergenceError("Nehari descent did not converge", last_iterate=problem.to_full(x))


def _deflation(problem, knowns, dparams):
    """Return ``(M(x), dlogM(x)[.] as a dual-like vector)`` for shifted deflation."""
    q, sigma = dparams.power, dparams.shift

    def factor(x):
        M = 1.0
        dlog = np.zeros_like(x)
        for k in knowns:
            w = x - k
            n2 = problem.inner(w, w)
            if n2 == 0.0:
                return np.inf, dlog
            m = n2 ** (-q / 2.0) + sigma
            M *= m
            Aw = _gram_apply(problem, w)
            dlog += (-q * n2 ** (-q / 2.0 - 1.0) / m) * Aw
        return M, dlog

    return factor


def _gram_apply(problem, w):
    sys = problem.system
    if problem.backend is Backend.FULL_SPACE:
        return sys.h1_operator @ w
    u = problem.to_full(w)
    # pairing with boundary directions d: (Dw, Dd)_H1 = (A Dw) . d on boundary rows
    return problem.ext.restrict(sys.h1_operator @ u)


def deflated_continue(
    system: AssembledSystem,
    config: SolverConfig,
    known: list,
    seed=None,
    backend: Backend = Backend.FULL_SPACE,
    depth=None,
) -> CriticalPoint | None:
    """Deflated Newton from ``seed``; returns a new critical point or None when exhausted.

    Known points, their antipodes and the trivial solution are all deflated.
    """
    problem = _problem(system, backend)
    rng = np.random.default_rng(config.rng_seed + 104729 + len(known))
    x = problem.from_full(_seed_from(system, seed, rng))
    knowns = [np.zeros_like(x)]
    for cp in known:
        k = problem.from_full(cp.u)
        knowns += [k, -k]
    deflate = _deflation(problem, knowns, config.deflation)

    def merit(x):
        M, _ = deflate(x)
        return M * problem.residual(x)

    res = problem.residual(x)
    for it in range(config.newton_max_iters * 3):
        if res <= config.grad_tol:
            break
        g = problem.dual(x)
        try:
            d = problem.newton_direction(x, g)
        except SolverError:
            return None
        M, dlog = deflate(x)
        denom = 1.0 - float(dlog @ d)
        tau = 1.0 / denom if abs(denom) > 1e-14 else 1.0
        d = tau * d
        mcur = merit(x)
        t = 1.0
        while True:
            cand = x + t * d
            mc = merit(cand)
            if (np.isfinite(mc) and mc < mcur) or t < 1e-4:
                break
            t *= 0.5
        if not np.all(np.isfinite(cand)):
            return None
        x = cand
        res = problem.residual(x)
        if not np.isfinite(res) or res > 1e12:
            return None
    x, _, ok = newton_polish(problem, x, config.grad_tol, config.newton_max_iters)
    if not ok:
        return None
    u = problem.to_full(x)
    dist_tol = 10.0 * config.grad_tol
    for k in knowns:
        ku = problem.to_full(k)
        if np.sqrt(system.h1_inner(u - ku, u - ku)) <= max(dist_tol, 1e-8 * np.sqrt(system.h1_inner(u, u))):
            return None
    report = _report(system, u, depth)
    return CriticalPoint(u=u, report=report, iterations=it, backend=problem.backend)


def is_known(system, u, known, tol) -> bool:
    for cp in known:
        for s in (1.0, -1.0):
            w = u - s * cp.u
            if np.sqrt(system.h1_inner(w, w)) <= tol:
                return True
    return False


def _smooth_boundary_seed(system, rng, n_bumps):
    """Random smooth boundary profile built from a few Gaussian bumps along GAMMA1."""
    mesh = system.mesh
    idx = system.dofs.free_boundary_dofs
    pts = mesh.vertices[idx]
    centers = pts[rng.choice(idx.size, size=n_bumps, replace=False)]
    signs = rng.choice([-1.0, 1.0], size=n_bumps)
    diam = np.ptp(mesh.vertices, axis=0).max()
    width = diam * rng.uniform(0.08, 0.25)
    v = np.zeros(mesh.n_vertices)
    for c, s in zip(centers, signs):
        v[idx] += s * np.exp(-np.sum((pts - c) ** 2, axis=1) / (2 * width**2))
    return HarmonicExtensionSolver.for_system(system).extend(v)


def find_critical_points(
    system: AssembledSystem,
    config: SolverConfig,
    count: int,
    ground: CriticalPoint | None = None,
    depth=None,
    backend: Backend = Backend.FULL_SPACE,
    extra_seeds=(),
    threads: int = 1,
) -> list[CriticalPoint]:
    """Best effort: ``count`` critical points with strictly increasing energies.

    Starts from the ground state and runs deflated Newton from random smooth
    seeds; every point found is deflated, and one representative per energy
    level is kept. With ``threads > 1`` seeds run in batches against the same
    known list and are merged in seed order, so results do not depend on
    thread scheduling.
    """
    if ground is None:
        ground = mountain_pass(system, config, backend=backend, depth=depth)
    found = [ground]
    rng = np.random.default_rng(config.rng_seed + 31337)
    seeds = list(extra_seeds)
    tries = 0
    threads = max(1, int(threads))
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def attempt(seed, known):
        try:
            lam, _ = fn.ray_scaling(system, seed)
        except DomainError:
            return None
        return deflated_continue(system, config, known, seed=lam * seed, backend=backend, depth=depth)

    try:
        while _count_levels(found) < count and tries < config.max_seeds:
            batch = []
            while len(batch) < threads and tries + len(batch) < config.max_seeds:
                batch.append(seeds.pop(0) if seeds else _smooth_boundary_seed(system, rng, int(rng.integers(1, 5))))
            known = list(found)
            if pool is None:
                results = [attempt(b, known) for b in batch]
            else:
                results = list(pool.map(lambda b: attempt(b, known), batch))
            for cp in results:
                tries += 1
                if cp is None or cp.report.energy_I <= 0:
                    continue
                if is_known(system, cp.u, found, 10.0 * config.grad_tol):
                    continue
                log.info("seed %d: new critical point with energy %.10g", tries, cp.report.energy_I)
                found.append(cp)
    finally:
        if pool is not None:
            pool.shutdown()
    return _distinct_levels(found)


def _level_key(found, rel=1e-6):
    levels: list[CriticalPoint] = []
    for cp in sorted(found, key=lambda c: c.report.energy_I):
        if not levels or cp.report.energy_I - levels[-1].report.energy_I > rel * (1.0 + abs(cp.report.energy_I)):
            levels.append(cp)
    return levels


def _count_levels(found) -> int:
    return len(_level_key(found))


def _distinct_levels(found) -> list[CriticalPoint]:
    return _level_key(found)
