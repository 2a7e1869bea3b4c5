"""Finite-element critical points for the Laplace equation with a nonlinear Wentzell boundary condition."""
