"""Every solver on one annulus, against the closed-form radial solution.

    python scripts/reference_annulus.py --n-r 32 --n-theta 128 --p 4 --vtk-dir out/
"""
import argparse
import time
from pathlib import Path

import numpy as np

from wentzell import functional as fn
from wentzell import io
from wentzell.assembly import assemble_system
from wentzell.mesh import generate_annulus_mesh
from wentzell.oracle import radial_interpolant, radial_solution, radial_symmetrizer
from wentzell.solvers import Backend, SolverConfig, mountain_pass, nehari_minimize


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--r0", type=float, default=1.0)
    ap.add_argument("--R", type=float, default=np.e)
    ap.add_argument("--n-r", type=int, default=32)
    ap.add_argument("--n-theta", type=int, default=128)
    ap.add_argument("--p", type=float, default=4.0)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--vtk-dir", type=Path, help="write one VTK file per solution here")
    args = ap.parse_args()

    mesh = generate_annulus_mesh(args.r0, args.R, args.n_r, args.n_theta)
    system = assemble_system(mesh, args.p)
    sol = radial_solution(args.r0, args.R, args.p)
    cfg = SolverConfig(p=args.p)

    t = time.perf_counter()
    depth = fn.compute_depth(system, cfg)
    rows = [("depth d", depth.depth_d, np.nan, time.perf_counter() - t, depth.maximizer)]

    def run(name, f):
        t = time.perf_counter()
        cp = f()
        rows.append((name, cp.energy, cp.report.weak_residual, time.perf_counter() - t, cp.u))

    for s in args.seeds:
        run(f"mountain pass seed {s}", lambda: mountain_pass(system, SolverConfig(p=args.p, rng_seed=s), depth=depth))
    run("nehari descent", lambda: nehari_minimize(system, cfg, depth=depth))
    run("boundary backend", lambda: mountain_pass(system, cfg, backend=Backend.BOUNDARY_DTN, depth=depth))
    run("radial subspace", lambda: mountain_pass(
        system, cfg, seed=radial_interpolant(mesh, sol, system.dofs), symmetry=radial_symmetrizer(mesh), depth=depth))

    print(f"annulus r0={args.r0:g} R={args.R:.6g} mesh {args.n_r}x{args.n_theta}, p={args.p:g}")
    print(f"radial oracle energy {sol.energy_I:.10f}  (c = {sol.c:.8f})")
    print(f"B = {depth.B:.10f}  lambda1 = {depth.lambda1:.10f}  lambda2 = {depth.lambda2:.10f}\n")
    print(f"{'method':24s} {'energy':>14s} {'rel to d':>10s} {'rel to oracle':>14s} {'residual':>9s} {'s':>6s}")
    for name, e, res, dt, _ in rows:
        print(f"{name:24s} {e:14.10f} {abs(e - depth.depth_d) / depth.depth_d:10.2e} "
              f"{abs(e - sol.energy_I) / sol.energy_I:14.2e} {res:9.1e} {dt:6.1f}")

    if args.vtk_dir:
        for name, _, _, _, u in rows:
            io.write_text(args.vtk_dir / (name.replace(" ", "_") + ".vtk"), io.vtk_legacy(mesh, u, name))


if __name__ == "__main__":
    main()
