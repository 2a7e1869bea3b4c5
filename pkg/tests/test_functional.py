import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import E, annulus_system, depth_of, random_field, smooth_field
from wentzell import functional as fn
from wentzell.oracle import radial_interpolant, radial_solution

RADIAL_ENERGY = np.pi / (2 * E)


def test_energy_of_zero():
    sys_ = annulus_system(4, 16)
    z = np.zeros(sys_.mesh.n_vertices)
    assert fn.energy(sys_, z) == 0.0
    assert np.all(fn.energy_dual(sys_, z) == 0.0)
    assert fn.nehari_value(sys_, z) == 0.0
    rep = fn.solution_report(sys_, z)
    assert rep.energy_I == 0 and rep.nehari_K == 0 and rep.weak_residual == 0


def test_radial_interpolant_energy_and_nehari():
    sys_ = annulus_system(32, 128)
    u = radial_interpolant(sys_.mesh, radial_solution(1.0, E, 4.0), sys_.dofs)
    assert abs(fn.energy(sys_, u) - RADIAL_ENERGY) / RADIAL_ENERGY <= 0.02
    N, P = fn.h1_norm_sq(sys_, u), sys_.p_integral(u)
    assert abs(N - P) / N <= 0.01
    lam, _ = fn.ray_scaling(sys_, u)
    assert lam == pytest.approx(1.0, abs=0.01)


@given(seed=st.integers(0, 2**32 - 1), lam=st.floats(0.01, 5.0))
@settings(max_examples=30, deadline=None)
def test_energy_scaling_is_polynomial(seed, lam):
    sys_ = annulus_system(4, 16, p=3.7)
    u = random_field(sys_, np.random.default_rng(seed))
    N, P = fn.h1_norm_sq(sys_, u), sys_.p_integral(u)
    ref = fn.ray_energy(N, P, sys_.p, lam)
    assert fn.energy(sys_, lam * u) == pytest.approx(ref, rel=1e-12, abs=1e-12 * (N * lam**2 + P * lam**sys_.p))


def test_energy_scaling_lambda_two(rng):
    sys_ = annulus_system(6, 24)
    u = random_field(sys_, rng)
    N, P = fn.h1_norm_sq(sys_, u), sys_.p_integral(u)
    assert fn.energy(sys_, 2 * u) == pytest.approx(0.5 * 4 * N - 2**4 * P / 4, rel=1e-13)


def test_gradient_finite_differences(rng):
    sys_ = annulus_system(8, 32)
    worst = 0.0
    for _ in range(20):
        u, phi = smooth_field(sys_, rng), smooth_field(sys_, rng)
        eps = 1e-6
        fd = (fn.energy(sys_, u + eps * phi) - fn.energy(sys_, u - eps * phi)) / (2 * eps)
        dual, riesz = fn.energy_gradient(sys_, u)
        an = dual @ phi
        worst = max(worst, abs(fd - an) / abs(an))
        # the Riesz representative pairs the same way in the H1 inner product
        assert sys_.h1_inner(riesz, phi) == pytest.approx(an, rel=1e-9)
    assert worst <= 1e-5


def test_nehari_is_gradient_pairing(rng):
    sys_ = annulus_system(6, 24)
    for _ in range(5):
        u = random_field(sys_, rng)
        K = fn.nehari_value(sys_, u)
        assert K == pytest.approx(fn.energy_dual(sys_, u) @ u, rel=1e-12)


def test_small_fields_have_positive_nehari(rng):
    sys_ = annulus_system(6, 24)
    for _ in range(5):
        u = 1e-3 * random_field(sys_, rng)
        assert fn.nehari_value(sys_, u) > 0


def test_ray_scaling_formula_examples():
    sys_ = annulus_system(6, 24)
    u = smooth_field(sys_, np.random.default_rng(3))
    N = fn.h1_norm_sq(sys_, u)
    lam, top = fn.ray_scaling(sys_, u)
    assert fn.nehari_value(sys_, lam * u) == pytest.approx(0.0, abs=1e-12 * N * lam**2)
    assert top == pytest.approx(fn.energy(sys_, lam * u), rel=1e-12)
    assert fn.ray_energy(1.0, 1.0, 4.0, 1.0) == pytest.approx(0.25)
    # (N, P) = (1, 1): maximizer 1, value 1/4
    ts = np.linspace(0.5, 1.5, 10001)
    assert ts[np.argmax(fn.ray_energy(1.0, 1.0, 4.0, ts))] == pytest.approx(1.0, abs=1e-4)


@given(seed=st.integers(0, 2**32 - 1), s=st.floats(1e-3, 1e3))
@settings(max_examples=30, deadline=None)
def test_ray_max_zero_homogeneous(seed, s):
    sys_ = annulus_system(4, 16)
    u = random_field(sys_, np.random.default_rng(seed))
    lam, top = fn.ray_scaling(sys_, u)
    lam_s, top_s = fn.ray_scaling(sys_, s * u)
    assert top_s == pytest.approx(top, rel=1e-10)
    assert lam_s * s == pytest.approx(lam, rel=1e-10)


def test_ray_scaling_zero_trace_is_domain_error():
    sys_ = annulus_system(4, 16)
    u = random_field(sys_, np.random.default_rng(0))
    u[sys_.dofs.boundary_dofs] = 0.0
    with pytest.raises(fn.DomainError):
        fn.ray_scaling(sys_, u)


def test_depth_identities():
    d = depth_of(32, 128)
    a = fn.depth_from_lambda1(d.lambda1, d.p)
    b = fn.depth_from_lambda2(d.lambda2, d.p)
    assert abs(a - b) <= 1e-12 * a
    assert d.depth_d > 0
    assert d.depth_d <= RADIAL_ENERGY + 1e-6
    out = d.to_dict()
    assert out["mesh_dependent"] is True
    assert set(out) >= {"B", "lambda1", "lambda2", "depth_d"}


def test_depth_frozen_reference_value():
    # independently reproduced by the mountain pass and Nehari solvers on this mesh
    d = depth_of(32, 128)
    assert d.B == pytest.approx(0.89036277, rel=1e-7)
    assert d.depth_d == pytest.approx(0.39780664817, rel=1e-9)


def test_depth_maximizer_sits_on_ray_top():
    sys_ = annulus_system(32, 128)
    d = depth_of(32, 128)
    lam, top = fn.ray_scaling(sys_, d.maximizer)
    assert lam == pytest.approx(1.0, rel=1e-9)
    assert top == pytest.approx(d.depth_d, rel=1e-8)


@pytest.mark.parametrize("n", [(2, 8), (3, 12), (6, 24)])
def test_depth_positive_on_every_mesh(n):
    assert depth_of(*n).depth_d > 0


def test_ray_sign_structure(rng):
    sys_ = annulus_system(8, 32)
    for _ in range(100):
        u = random_field(sys_, rng) if rng.random() < 0.5 else smooth_field(sys_, rng)
        lam_u, _ = fn.ray_scaling(sys_, u)
        lam = lam_u * np.exp(rng.uniform(-2, 2))
        assert np.sign(fn.nehari_value(sys_, lam * u)) == np.sign(lam_u - lam)
        assert abs(fn.nehari_value(sys_, lam_u * u)) <= 1e-12 * fn.h1_norm_sq(sys_, lam_u * u)


def test_quotient_ceiling(rng):
    sys_ = annulus_system(32, 128)
    B = depth_of(32, 128).B
    for _ in range(100):
        d = depth_of(32, 128)
        u = smooth_field(sys_, rng) if rng.random() < 0.5 else d.maximizer + 10 ** rng.uniform(-4, 0) * smooth_field(sys_, rng)
        u = u * np.exp(rng.uniform(-3, 3))
        tp = sys_.p_integral(u) ** (1 / sys_.p)
        assert tp <= B * np.sqrt(fn.h1_norm_sq(sys_, u)) + 1e-8


def test_report_invariants(rng):
    sys_ = annulus_system(6, 24)
    d = depth_of(6, 24)
    for _ in range(5):
        u = random_field(sys_, rng)
        r = fn.solution_report(sys_, u, d)
        assert r.energy_I == pytest.approx(0.5 * r.h1_norm**2 - r.trace_p_norm**sys_.p / sys_.p, rel=1e-12)
        assert r.nehari_K == pytest.approx(r.h1_norm**2 - r.trace_p_norm**sys_.p, rel=1e-12)
        assert r.lambda1_residual == pytest.approx(abs(r.h1_norm - d.lambda1))
        assert set(r.to_dict()) == {
            "energy_I", "nehari_K", "h1_norm", "trace_p_norm", "weak_residual", "lambda1_residual", "lambda2_residual"
        }
