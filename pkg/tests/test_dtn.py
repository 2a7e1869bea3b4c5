import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import annulus_system, random_field, smooth_field
from wentzell import functional as fn
from wentzell.dtn import (
    HarmonicExtensionSolver,
    boundary_energy,
    boundary_gradient,
    dtn_form,
    dtn_pairing_with_lift,
    harmonic_extension,
    harmonic_projection,
)


def ext(sys_):
    return HarmonicExtensionSolver.for_system(sys_)


def boundary_field(sys_, rng):
    v = np.zeros(sys_.mesh.n_vertices)
    idx = sys_.dofs.free_boundary_dofs
    v[idx] = rng.standard_normal(idx.size)
    return v


def test_zero_extends_to_zero():
    sys_ = annulus_system(4, 16)
    assert np.all(harmonic_extension(ext(sys_), np.zeros(sys_.mesh.n_vertices)) == 0)


def test_log_trace_extends_to_log():
    sys_ = annulus_system(32, 128)
    lnr = np.log(np.hypot(*sys_.mesh.vertices.T))
    u = harmonic_extension(ext(sys_), lnr)
    assert np.max(np.abs(u - lnr)) <= 0.01 * np.max(np.abs(lnr))
    assert dtn_form(ext(sys_), lnr, lnr) == pytest.approx(2 * np.pi, rel=0.01)


def test_extension_is_harmonic_and_keeps_trace(rng):
    sys_ = annulus_system(8, 32)
    s = ext(sys_)
    v = boundary_field(sys_, rng)
    u = s.extend(v)
    assert np.array_equal(u[s.boundary], v[s.boundary])
    res = (s.stiffness @ u)[s.interior]
    assert np.linalg.norm(res) <= 1e-10 * np.linalg.norm(s.stiffness @ v)


def test_linearity(rng):
    sys_ = annulus_system(8, 32)
    s = ext(sys_)
    v, w = boundary_field(sys_, rng), boundary_field(sys_, rng)
    a, b = 1.7, -0.3
    assert np.allclose(s.extend(a * v + b * w), a * s.extend(v) + b * s.extend(w), atol=1e-12)


def test_dtn_form_symmetric_positive_and_lift_independent(rng):
    sys_ = annulus_system(8, 32)
    s = ext(sys_)
    for _ in range(5):
        v, w = boundary_field(sys_, rng), boundary_field(sys_, rng)
        vw = dtn_form(s, v, w)
        assert vw == pytest.approx(dtn_form(s, w, v), rel=1e-12)
        assert dtn_form(s, v, v) > 0
        # any lift of w, harmonic or not, gives the same pairing
        lift = w + s.restrict(np.zeros_like(w))
        lift[s.interior] = rng.standard_normal(s.interior.size)
        assert dtn_pairing_with_lift(s, v, lift) == pytest.approx(vw, rel=1e-9, abs=1e-10)
    # zero only for a constant extension, which must vanish because GAMMA0 is pinned
    assert dtn_form(s, np.zeros(sys_.mesh.n_vertices), np.zeros(sys_.mesh.n_vertices)) == 0.0


def test_boundary_energy_equals_energy_of_extension(rng):
    sys_ = annulus_system(16, 64)
    s = ext(sys_)
    assert boundary_energy(s, sys_, np.zeros(sys_.mesh.n_vertices)) == 0.0
    for _ in range(10):
        v = boundary_field(sys_, rng)
        ref = fn.energy(sys_, s.extend(v))
        assert abs(boundary_energy(s, sys_, v) - ref) <= 1e-10 * (1 + abs(ref))


def test_boundary_gradient_finite_differences(rng):
    sys_ = annulus_system(8, 32)
    s = ext(sys_)
    worst = 0.0
    for _ in range(20):
        v, w = s.restrict(smooth_field(sys_, rng)), s.restrict(smooth_field(sys_, rng))
        eps = 1e-6
        fd = (boundary_energy(s, sys_, v + eps * w) - boundary_energy(s, sys_, v - eps * w)) / (2 * eps)
        an = boundary_gradient(s, sys_, v) @ w
        worst = max(worst, abs(fd - an) / abs(an))
    assert worst <= 1e-5


def test_projection_orthogonality_and_idempotence(rng):
    sys_ = annulus_system(16, 64)
    s = ext(sys_)
    for _ in range(10):
        u = random_field(sys_, rng)
        h, i = harmonic_projection(s, u)
        assert abs(sys_.h1_inner(h, i)) <= 1e-10 * sys_.h1_inner(u, u)
        assert np.all(i[s.boundary] == 0)
        h2, i2 = harmonic_projection(s, h)
        assert np.linalg.norm(i2) <= 1e-12 * np.linalg.norm(h)
    u = random_field(sys_, rng)
    u[s.boundary] = 0.0
    h, _ = harmonic_projection(s, u)
    assert np.all(h == 0)


@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-3, 10.0))
@settings(max_examples=25, deadline=None)
def test_dirichlet_principle(seed, scale):
    sys_ = annulus_system(6, 24)
    s = ext(sys_)
    rng = np.random.default_rng(seed)
    v = boundary_field(sys_, rng)
    lift = s.extend(v)
    lift[s.interior] += scale * rng.standard_normal(s.interior.size)
    harmonic = dtn_form(s, v, v)
    assert harmonic <= lift @ (s.stiffness @ lift) + 1e-12 * harmonic


def test_gradient_restriction_identity(rng):
    sys_ = annulus_system(8, 32)
    s = ext(sys_)
    u = s.extend(boundary_field(sys_, rng))
    g = fn.energy_dual(sys_, u)
    psi = np.zeros_like(u)
    psi[s.interior] = rng.standard_normal(s.interior.size)
    assert abs(g @ psi) <= 1e-10 * np.linalg.norm(g) * np.linalg.norm(psi)
