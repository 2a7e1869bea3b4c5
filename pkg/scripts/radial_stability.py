"""Morse index of the radial critical point on an annulus.

A mountain-pass critical point has Morse index at most one. Counting the
negative eigenvalues of the second derivative of I at the radial solution,
relative to the H1 inner product, shows whether the radial branch can be
the least-energy solution. Eigenvectors are classified by their dominant
angular Fourier mode.
"""
import argparse

import numpy as np
import scipy.linalg as sla

from wentzell.assembly import assemble_system
from wentzell.mesh import annulus_rings, generate_annulus_mesh
from wentzell.oracle import radial_interpolant, radial_solution, radial_symmetrizer
from wentzell.solvers import SolverConfig, mountain_pass


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-r", type=int, default=8)
    ap.add_argument("--n-theta", type=int, default=32)
    ap.add_argument("--p", type=float, default=4.0)
    ap.add_argument("--show", type=int, default=6)
    args = ap.parse_args()

    mesh = generate_annulus_mesh(1.0, np.e, args.n_r, args.n_theta)
    system = assemble_system(mesh, args.p)
    sol = radial_solution(1.0, np.e, args.p)
    cp = mountain_pass(system, SolverConfig(p=args.p), seed=radial_interpolant(mesh, sol, system.dofs),
                       symmetry=radial_symmetrizer(mesh))
    free = system.dofs.free_dofs
    H = system.hessian(cp.u).toarray()[np.ix_(free, free)]
    G = system.h1_operator.toarray()[np.ix_(free, free)]
    mu, vecs = sla.eigh(H, G)
    outer = np.flatnonzero(annulus_rings(mesh, args.n_theta) == args.n_r)
    print(f"radial critical point: energy {cp.energy:.8f}, residual {cp.report.weak_residual:.1e}")
    print(f"negative eigenvalues (Morse index): {int(np.sum(mu < 0))}")
    for k in range(min(args.show, mu.size)):
        v = np.zeros(mesh.n_vertices)
        v[free] = vecs[:, k]
        mode = int(np.argmax(np.abs(np.fft.rfft(v[outer]))))
        print(f"  mu_{k} = {mu[k]: .6f}   dominant angular mode {mode}")


if __name__ == "__main__":
    main()
