"""Mesh refinement: discrete depth, ground state and radial branch against the oracle."""
import argparse

import numpy as np

from wentzell import functional as fn
from wentzell.assembly import assemble_system
from wentzell.mesh import generate_annulus_mesh
from wentzell.oracle import radial_interpolant, radial_solution, radial_symmetrizer
from wentzell.solvers import SolverConfig, mountain_pass


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, default=4.0)
    ap.add_argument("--levels", type=int, default=4, help="meshes 8x32 doubled this many times")
    args = ap.parse_args()
    sol = radial_solution(1.0, np.e, args.p)
    cfg = SolverConfig(p=args.p)
    print(f"{'mesh':>9s} {'d':>12s} {'radial':>12s} {'radial gap':>11s} {'interp residual':>16s}")
    for k in range(args.levels):
        n_r, n_t = 8 * 2**k, 32 * 2**k
        mesh = generate_annulus_mesh(1.0, np.e, n_r, n_t)
        system = assemble_system(mesh, args.p)
        d = fn.compute_depth(system, cfg).depth_d
        seed = radial_interpolant(mesh, sol, system.dofs)
        radial = mountain_pass(system, cfg, seed=seed, symmetry=radial_symmetrizer(mesh))
        gap = abs(radial.energy - sol.energy_I) / sol.energy_I
        print(f"{n_r:4d}x{n_t:<4d} {d:12.8f} {radial.energy:12.8f} {gap:11.2e} {fn.weak_residual(system, seed):16.2e}")
    print(f"oracle energy {sol.energy_I:.8f}")


if __name__ == "__main__":
    main()
