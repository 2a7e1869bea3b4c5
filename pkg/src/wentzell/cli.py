"""Command-line entry point.

Subcommands: mesh-annulus, check, solve, depth, multiplicity, oracle, compare.
Reports are flat JSON on stdout (or ``--output``); failures print an error
JSON and exit with 1 (config), 2 (mesh) or 3 (convergence).
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import functional as fn
from . import io
from .assembly import AssemblyError, assemble_system, boundary_p_integral
from .dtn import HarmonicExtensionSolver
from .functional import ConvergenceError, DomainError
from .linalg import SolverError
from .mesh import GAMMA0, GAMMA1, MeshError, generate_annulus_mesh, load_mesh, save_mesh, validate_mesh
from .oracle import OracleError, radial_interpolant, radial_solution, radial_symmetrizer
from .solvers import Backend, DeflationParams, DescentParams, SolverConfig, find_critical_points, mountain_pass, nehari_minimize

EXIT_OK, EXIT_CONFIG, EXIT_MESH, EXIT_CONVERGENCE = 0, 1, 2, 3

log = logging.getLogger("wentzell")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    mesh_file: str | None = None
    annulus: tuple | None = None
    p: float = 4.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: str = "auto"
    backend: str = Backend.FULL_SPACE.value
    count: int = 3
    r0: float | None = None
    R: float | None = None
    output: str | None = None
    csv: str | None = None
    vtk: str | None = None
    mesh_output: str | None = None
    timestamp: bool = True

    def __post_init__(self):
        if not (isinstance(self.p, (int, float)) and self.p > 2):
            raise ConfigError(f"p must exceed 2 (got {self.p})")
        if self.solver.p != self.p:
            self.solver = dataclasses.replace(self.solver, p=self.p)

    def resolved(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("timestamp")
        return d


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("WENTZELL_THREADS", "1")))
    except ValueError:
        raise ConfigError("WENTZELL_THREADS must be an integer") from None


def _load(cfg: RunConfig):
    if cfg.mesh_file and cfg.annulus:
        raise ConfigError("give either --mesh or --annulus, not both")
    if cfg.mesh_file:
        try:
            text = Path(cfg.mesh_file).read_text()
        except OSError as exc:
            raise MeshError(f"cannot read mesh file: {exc}") from exc
        return load_mesh(text)
    if cfg.annulus:
        r0, R, n_r, n_theta = cfg.annulus
        return generate_annulus_mesh(float(r0), float(R), int(n_r), int(n_theta))
    raise ConfigError("a mesh source is required: --mesh FILE or --annulus r0 R n_r n_theta")


def _seed_mode(cfg: RunConfig) -> str:
    if cfg.seed == "auto":
        return "radial" if cfg.annulus else "random"
    if cfg.seed == "radial" and not cfg.annulus:
        raise ConfigError("--seed radial needs an --annulus mesh")
    return cfg.seed


def _exports(cfg: RunConfig, mesh, u) -> None:
    if cfg.csv:
        io.write_text(cfg.csv, io.solution_csv(mesh, u))
    if cfg.vtk:
        io.write_text(cfg.vtk, io.vtk_legacy(mesh, u))


def _cmd_mesh_annulus(cfg):
    mesh = _load(cfg)
    if cfg.mesh_output:
        io.write_text(cfg.mesh_output, save_mesh(mesh))
    return {
        "n_vertices": mesh.n_vertices,
        "n_triangles": mesh.n_triangles,
        "n_gamma0_edges": int(np.sum(mesh.edge_tags == GAMMA0)),
        "n_gamma1_edges": int(np.sum(mesh.edge_tags == GAMMA1)),
        "gamma1_length": mesh.tag_length(GAMMA1),
        "area": float(mesh.signed_areas().sum()),
        "mesh_file": cfg.mesh_output,
    }


def _cmd_check(cfg):
    if cfg.mesh_file:
        mesh = load_mesh(Path(cfg.mesh_file).read_text(), validate=False)
    else:
        mesh = _load(cfg)
    diags = validate_mesh(mesh)
    out = {"valid": not diags, "diagnostics": diags, "n_vertices": mesh.n_vertices, "n_triangles": mesh.n_triangles}
    if diags:
        return out
    system = assemble_system(mesh, cfg.p)
    dofs = system.dofs
    ones = np.ones(mesh.n_vertices)
    K, S, M = system.interior_stiffness, system.boundary_stiffness, system.boundary_mass
    sym = max(abs(X - X.T).max() if X.nnz else 0.0 for X in (K, S, M))
    try:
        system.h1_factor
        definite = True
    except SolverError:
        definite = False
    gamma1_interior = np.setdiff1d(dofs.boundary_dofs, np.unique(mesh.edges_with_tag(GAMMA0)))
    out.update(
        n_free_dofs=int(dofs.free_dofs.size),
        n_constrained_dofs=int(dofs.constrained_dofs.size),
        n_boundary_dofs=int(dofs.boundary_dofs.size),
        gamma0_length=mesh.tag_length(GAMMA0),
        gamma1_length=mesh.tag_length(GAMMA1),
        area=float(mesh.signed_areas().sum()),
        operators_symmetric=bool(sym == 0.0),
        h1_positive_definite=definite,
        boundary_stiffness_ones_max=float(np.abs((S @ ones)[gamma1_interior]).max(initial=0.0)),
        boundary_mass_ones=float(ones @ (M @ ones)),
        p_integral_ones=boundary_p_integral(mesh, ones, cfg.p),
    )
    return out


def _depth(system, cfg):
    return fn.compute_depth(system, cfg.solver)


def _cmd_depth(cfg):
    mesh = _load(cfg)
    system = assemble_system(mesh, cfg.p)
    depth = _depth(system, cfg)
    out = depth.to_dict()
    lam_u, ray_max = fn.ray_scaling(system, depth.maximizer)
    out["identity_rel_gap"] = abs(out["depth_d"] - out["depth_from_lambda2"]) / out["depth_d"]
    out["ray_max_at_maximizer"] = ray_max
    _exports(cfg, mesh, depth.maximizer)
    return out


def _cmd_solve(cfg):
    mesh = _load(cfg)
    system = assemble_system(mesh, cfg.p)
    mode = _seed_mode(cfg)
    symmetry = None
    seed = None
    if mode == "radial":
        r0, R = float(cfg.annulus[0]), float(cfg.annulus[1])
        seed = radial_interpolant(mesh, radial_solution(r0, R, cfg.p), system.dofs)
        symmetry = radial_symmetrizer(mesh)
    cp = mountain_pass(system, cfg.solver, seed=seed, backend=Backend(cfg.backend), symmetry=symmetry)
    out = {"seed_mode": mode, "backend": cp.backend.value, "iterations": cp.iterations}
    out.update({f"{k}": v for k, v in cp.report.to_dict().items() if not k.startswith("lambda")})
    out["energy"] = cp.report.energy_I
    out["path_max_final"] = cp.path_max_history[-1] if cp.path_max_history else None
    _exports(cfg, mesh, cp.u)
    return out


def _cmd_multiplicity(cfg):
    threads = _threads()
    mesh = _load(cfg)
    system = assemble_system(mesh, cfg.p)
    depth = _depth(system, cfg)
    ground = mountain_pass(system, cfg.solver, depth=depth)
    pts = find_critical_points(system, cfg.solver, cfg.count, ground=ground, depth=depth, threads=threads)
    out = {
        "requested": cfg.count,
        "found": len(pts),
        "depth_d": depth.depth_d,
        "energies": [cp.report.energy_I for cp in pts],
        "weak_residuals": [cp.report.weak_residual for cp in pts],
        "h1_norms": [cp.report.h1_norm for cp in pts],
    }
    if pts:
        _exports(cfg, mesh, pts[-1].u)
    if len(pts) < cfg.count:
        out["exhausted"] = True
    return out


def _cmd_oracle(cfg):
    if cfg.r0 is None or cfg.R is None:
        raise ConfigError("oracle needs --r0 and --R")
    sol = radial_solution(cfg.r0, cfg.R, cfg.p)
    out = sol.to_dict()
    out["boundary_residual"] = sol.boundary_residual()
    return out


def _cmd_compare(cfg):
    if not cfg.annulus:
        raise ConfigError("compare needs an --annulus mesh")
    mesh = _load(cfg)
    system = assemble_system(mesh, cfg.p)
    r0, R = float(cfg.annulus[0]), float(cfg.annulus[1])
    sol = radial_solution(r0, R, cfg.p)
    depth = _depth(system, cfg)
    ground = mountain_pass(system, cfg.solver, depth=depth)
    nehari = nehari_minimize(system, cfg.solver, depth=depth)
    radial = mountain_pass(
        system,
        cfg.solver,
        seed=radial_interpolant(mesh, sol, system.dofs),
        symmetry=radial_symmetrizer(mesh),
        depth=depth,
    )
    ext = HarmonicExtensionSolver.for_system(system)
    boundary = mountain_pass(system, cfg.solver, backend=Backend.BOUNDARY_DTN, depth=depth)
    d = depth.depth_d
    out = {
        "oracle_energy": sol.energy_I,
        "depth_d": d,
        "mountain_pass_energy": ground.energy,
        "nehari_energy": nehari.energy,
        "boundary_backend_energy": boundary.energy,
        "radial_solve_energy": radial.energy,
        "mountain_pass_vs_depth_rel": abs(ground.energy - d) / d,
        "nehari_vs_depth_rel": abs(nehari.energy - d) / d,
        "radial_vs_oracle_rel": abs(radial.energy - sol.energy_I) / sol.energy_I,
        "depth_below_oracle": bool(d <= sol.energy_I),
        "ground_state_is_radial": bool(abs(ground.energy - radial.energy) <= 1e-6 * radial.energy),
        "ground_state_lambda1_rel": ground.report.lambda1_residual / depth.lambda1,
        "ground_state_lambda2_rel": ground.report.lambda2_residual / depth.lambda2,
        "harmonic_extension_dofs": int(ext.interior.size),
    }
    _exports(cfg, mesh, ground.u)
    return out


COMMANDS = {
    "mesh-annulus": _cmd_mesh_annulus,
    "check": _cmd_check,
    "solve": _cmd_solve,
    "depth": _cmd_depth,
    "multiplicity": _cmd_multiplicity,
    "oracle": _cmd_oracle,
    "compare": _cmd_compare,
}


def run(cfg: RunConfig, stream=None) -> int:
    stream = stream or sys.stdout
    t0 = time.perf_counter()
    try:
        result = COMMANDS[cfg.command](cfg)
        code = EXIT_OK
    except (ConvergenceError, DomainError, SolverError) as exc:
        # DomainError is also a ValueError, so this clause must come first
        result, code = _error(exc, EXIT_CONVERGENCE), None
    except (ConfigError, OracleError, ValueError) as exc:
        result, code = _error(exc, EXIT_MESH if isinstance(exc, (MeshError, AssemblyError)) else EXIT_CONFIG), None
    if code is None:
        code = result["exit_code"]
    else:
        result = {"command": cfg.command, **result, "config": cfg.resolved()}
        if cfg.timestamp:
            result["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
            result["elapsed_s"] = time.perf_counter() - t0
    text = io.dumps_report(result)
    if cfg.output and code == EXIT_OK:
        io.write_text(cfg.output, text)
    stream.write(text)
    return code


def _error(exc, code) -> dict:
    out = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    diags = getattr(exc, "diagnostics", None)
    if diags:
        out["diagnostics"] = diags
    return out


class _Parser(argparse.ArgumentParser):
    # usage errors are config errors (exit 1), not argparse's default exit 2
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    src = common.add_argument_group("mesh source")
    src.add_argument("--mesh", dest="mesh_file", help="mesh file in the plain-text format")
    src.add_argument("--annulus", nargs=4, metavar=("R0", "R", "N_R", "N_THETA"), help="structured annulus")
    common.add_argument("--p", type=float, default=4.0, help="boundary exponent, p > 2")
    s = common.add_argument_group("solver")
    s.add_argument("--grad-tol", type=float, default=1e-8)
    s.add_argument("--max-iters", type=int, default=5000)
    s.add_argument("--path-points", type=int, default=24)
    s.add_argument("--initial-step", type=float, default=1.0)
    s.add_argument("--backtrack", type=float, default=0.5)
    s.add_argument("--armijo", type=float, default=1e-4)
    s.add_argument("--deflation-shift", type=float, default=1.0)
    s.add_argument("--deflation-power", type=float, default=2.0)
    s.add_argument("--multistart", type=int, default=4)
    s.add_argument("--rng-seed", type=int, default=0)
    s.add_argument("--newton-switch", type=float, default=1e-3)
    s.add_argument("--max-seeds", type=int, default=60)
    o = common.add_argument_group("output")
    o.add_argument("-o", "--output", help="write the JSON report here as well as to stdout")
    o.add_argument("--csv", help="solution CSV (vertex_index,x,y,u)")
    o.add_argument("--vtk", help="legacy VTK unstructured grid with point scalar u")
    o.add_argument("--no-timestamp", dest="timestamp", action="store_false")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = _Parser(prog="wentzell", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    m = sub.add_parser("mesh-annulus", parents=[common], help="generate a structured annulus mesh file")
    m.add_argument("--mesh-output", help="where to write the mesh file")
    sub.add_parser("check", parents=[common], help="mesh and operator invariant suite")
    sv = sub.add_parser("solve", parents=[common], help="mountain-pass solve")
    sv.add_argument("--seed", choices=["auto", "radial", "random"], default="auto")
    sv.add_argument("--backend", choices=[b.value for b in Backend], default=Backend.FULL_SPACE.value)
    sub.add_parser("depth", parents=[common], help="best trace constant and potential-well depth")
    mu = sub.add_parser("multiplicity", parents=[common], help="several critical points by deflation")
    mu.add_argument("--count", type=int, default=3)
    orc = sub.add_parser("oracle", parents=[common], help="closed-form radial solution")
    orc.add_argument("--r0", type=float)
    orc.add_argument("--R", type=float)
    sub.add_parser("compare", parents=[common], help="solvers vs depth vs radial oracle")
    return ap


def config_from_args(args: argparse.Namespace) -> RunConfig:
    solver = SolverConfig(
        p=args.p,
        grad_tol=args.grad_tol,
        max_iters=args.max_iters,
        path_points=args.path_points,
        descent=DescentParams(args.initial_step, args.backtrack, args.armijo),
        deflation=DeflationParams(args.deflation_shift, args.deflation_power),
        multistart_count=args.multistart,
        rng_seed=args.rng_seed,
        newton_switch=args.newton_switch,
        max_seeds=args.max_seeds,
    )
    annulus = None
    if args.annulus:
        try:
            annulus = (float(args.annulus[0]), float(args.annulus[1]), int(args.annulus[2]), int(args.annulus[3]))
        except ValueError:
            raise ConfigError("--annulus expects r0 R n_r n_theta (n_r, n_theta integers)") from None
    return RunConfig(
        command=args.command,
        mesh_file=args.mesh_file,
        annulus=annulus,
        p=args.p,
        solver=solver,
        seed=getattr(args, "seed", "auto"),
        backend=getattr(args, "backend", Backend.FULL_SPACE.value),
        count=getattr(args, "count", 3),
        r0=getattr(args, "r0", None),
        R=getattr(args, "R", None),
        output=args.output,
        csv=args.csv,
        vtk=args.vtk,
        mesh_output=getattr(args, "mesh_output", None),
        timestamp=args.timestamp,
    )


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
        cfg = config_from_args(args)
    except (ConfigError, ValueError) as exc:
        sys.stdout.write(io.dumps_report(_error(exc, EXIT_CONFIG)))
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
