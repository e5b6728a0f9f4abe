import numpy as np
import pytest

from spherepf import (
    Grid,
    SphereField,
    analyze,
    bmc_defect,
    diff,
    extend_bmc,
    glide,
    inner_grid,
    inner_weighted,
    integrate_sphere,
    norm_weighted,
    restrict,
    spherical_laplacian,
    symmetrize_bmc,
    synthesize,
)
from spherepf.dfs import BmcDefectWarning
from spherepf.harmonics import eigenvalue, harmonic_basis, real_harmonic

from _oracles import harmonic_self_integral
from conftest import random_bmc_field, random_rough_bmc_field


# ---- grid ---------------------------------------------------------------


def test_grid_rejects_odd_sizes():
    with pytest.raises(ValueError):
        Grid(15, 16)
    with pytest.raises(ValueError):
        Grid(16, 0)


def test_grid_nodes_uniform(grid32):
    assert grid32.h_phi == 2 * np.pi / 32
    assert np.allclose(np.diff(grid32.theta), grid32.h_theta)
    assert grid32.phi[0] == -np.pi and grid32.theta[0] == -np.pi


# ---- BMC extension / restriction ------------------------------------------


def test_extend_cos_theta_even(grid32):
    P, T = grid32.meshgrid()
    phi, th = grid32.native_nodes()
    native = np.cos(th)[None, :] * np.ones((grid32.n_phi, 1))
    f = extend_bmc(grid32, native)
    assert np.allclose(f.values, np.cos(T), atol=1e-15)


def test_extend_sin_cosphi_identity(grid32):
    P, T = grid32.meshgrid()
    phi, th = grid32.native_nodes()
    native = np.sin(th)[None, :] * np.cos(phi)[:, None]
    f = extend_bmc(grid32, native)
    assert np.allclose(f.values, np.sin(T) * np.cos(P), atol=1e-14)


def test_extend_block_layout_matches_glide_rule(grid32):
    # entry-by-entry check of the doubling rule on random native data
    rng = np.random.default_rng(3)
    g = grid32
    native = rng.standard_normal((g.n_phi, g.native_n_theta))
    f = extend_bmc(g, native).values
    n = g.n_theta
    for j in range(n):
        if j >= n // 2:
            assert np.array_equal(f[:, j], native[:, j - n // 2])
        else:
            expected = np.roll(native[:, n // 2 - j], g.n_phi // 2)
            assert np.array_equal(f[:, j], expected)


def test_restrict_constant_and_roundtrip(grid32):
    ones = extend_bmc(grid32, np.ones((grid32.n_phi, grid32.native_n_theta)))
    assert np.array_equal(restrict(ones), np.ones((grid32.n_phi, grid32.native_n_theta)))
    rng = np.random.default_rng(7)
    native = rng.standard_normal((grid32.n_phi, grid32.native_n_theta))
    # arbitrary native data is not pole-consistent; silence the expected warning
    with pytest.warns(BmcDefectWarning):
        back = restrict(extend_bmc(grid32, native))
    assert np.array_equal(back, native)


def test_restrict_warns_on_asymmetric_field(grid32):
    rng = np.random.default_rng(11)
    vals = rng.standard_normal((grid32.n_phi, grid32.n_theta))
    with pytest.warns(BmcDefectWarning):
        out = restrict(SphereField(grid32, vals))
    assert out.shape == (grid32.n_phi, grid32.native_n_theta)


# ---- symmetrization ---------------------------------------------------------


def test_symmetrize_fixed_point(grid32):
    f = random_bmc_field(grid32, 0)
    assert bmc_defect(f) < 1e-12
    s = symmetrize_bmc(f)
    assert np.allclose(s.values, f.values, atol=1e-14)


def test_symmetrize_removes_antisymmetric_part(grid32):
    f = random_bmc_field(grid32, 1)
    rng = np.random.default_rng(2)
    g_vals = rng.standard_normal(f.values.shape)
    delta = g_vals - glide(SphereField(grid32, g_vals))  # glide-antisymmetric
    noisy = SphereField(grid32, f.values + delta)
    cleaned = symmetrize_bmc(noisy)
    assert np.allclose(cleaned.values, f.values, atol=1e-12)


def test_symmetrize_idempotent(grid32):
    rng = np.random.default_rng(5)
    f = SphereField(grid32, rng.standard_normal((grid32.n_phi, grid32.n_theta)))
    once = symmetrize_bmc(f)
    twice = symmetrize_bmc(once)
    assert np.array_equal(once.values, twice.values)


# ---- transforms -------------------------------------------------------------


def test_analyze_single_mode(grid32):
    # cos(2 theta + 3 phi): one conjugate pair at (k, l) = (2, 3), (-2, -3)
    P, T = grid32.meshgrid()
    c = analyze(SphereField(grid32, np.cos(2 * T + 3 * P))).coeffs
    k = grid32.po_wavenumbers
    l = grid32.az_wavenumbers
    nz = np.argwhere(np.abs(c) > 1e-12)
    found = sorted((int(l[i]), int(k[j])) for i, j in nz)
    assert found == [(-3, -2), (3, 2)]
    i_pos = np.argwhere(l == 3)[0, 0]
    j_pos = np.argwhere(k == 2)[0, 0]
    assert abs(c[i_pos, j_pos] - 0.5) < 1e-13


def test_roundtrip_and_glide_preservation(grid32):
    f = random_rough_bmc_field(grid32, 9)
    back = synthesize(analyze(f))
    scale = np.max(np.abs(f.values))
    assert np.max(np.abs(back.values - f.values)) <= 1e-13 * scale
    assert bmc_defect(back) <= 1e-13 * scale


def test_conjugate_symmetry(grid32):
    c = analyze(random_rough_bmc_field(grid32, 13)).coeffs
    n_phi, n_theta = c.shape
    for i in range(n_phi):
        for j in range(n_theta):
            i2 = (-i) % n_phi
            j2 = (-j) % n_theta
            assert abs(c[i, j] - np.conj(c[i2, j2])) < 1e-12


def test_parseval(grid32):
    f = random_rough_bmc_field(grid32, 17)
    c = analyze(f).coeffs
    lhs = grid32.h_phi * grid32.h_theta * np.sum(f.values ** 2)
    rhs = (2 * np.pi) ** 2 * np.sum(np.abs(c) ** 2)
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


def test_diff_eigenmodes(grid32):
    P, T = grid32.meshgrid()
    cos_t = SphereField(grid32, np.cos(T))
    d2 = synthesize(diff(analyze(cos_t), "theta2"))
    assert np.allclose(d2.values, -np.cos(T), atol=1e-13)

    const = SphereField(grid32, np.ones_like(T))
    dphi = synthesize(diff(analyze(const), "phi"))
    assert np.max(np.abs(dphi.values)) < 1e-14

    f = SphereField(grid32, np.sin(T) * np.cos(P))
    dpp = synthesize(diff(analyze(f), "phi2"))
    assert np.allclose(dpp.values, -f.values, atol=1e-13)

    with pytest.raises(ValueError):
        diff(analyze(const), "theta")


# ---- quadrature -------------------------------------------------------------


def test_integrate_basics(grid32):
    P, T = grid32.meshgrid()
    one = SphereField(grid32, np.ones_like(T))
    assert abs(integrate_sphere(one) - 4 * np.pi) < 1e-12
    cos2 = SphereField(grid32, np.cos(T) ** 2)
    assert abs(integrate_sphere(cos2) - 4 * np.pi / 3) < 1e-12
    odd = SphereField(grid32, np.sin(T) * np.cos(P))
    assert abs(integrate_sphere(odd)) < 1e-13


@pytest.mark.parametrize("n", [18, 32, 64])
def test_quadrature_exact_on_harmonic_products(n):
    # orthogonality + closed-form diagonal for degree <= 4
    grid = Grid(n, n)
    basis = harmonic_basis(grid, 4)
    rng = np.random.default_rng(0)
    picks = rng.choice(len(basis), size=min(8, len(basis)), replace=False)
    for a in picks:
        for b in picks:
            da, ma, ka, fa = basis[a]
            db, mb, kb, fb = basis[b]
            val = inner_weighted(fa, fb)
            if (da, ma, ka) == (db, mb, kb):
                expect = harmonic_self_integral(da, ma)
            else:
                expect = 0.0
            assert abs(val - expect) <= 1e-12 * max(1.0, abs(expect))


def test_inner_weighted_and_cauchy_schwarz(grid32):
    P, T = grid32.meshgrid()
    one = SphereField(grid32, np.ones_like(T))
    cos_t = SphereField(grid32, np.cos(T))
    assert abs(inner_weighted(one, one) - 4 * np.pi) < 1e-12
    assert abs(inner_weighted(cos_t, cos_t) - 4 * np.pi / 3) < 1e-12
    for seed in range(5):
        f = random_bmc_field(grid32, seed)
        g = random_bmc_field(grid32, seed + 100)
        lhs = abs(inner_weighted(f, g))
        rhs = norm_weighted(f) * norm_weighted(g)
        assert lhs <= rhs * (1 + 1e-12)


def test_inner_grid_diagnostic(grid32):
    one = SphereField(grid32, np.ones((grid32.n_phi, grid32.n_theta)))
    assert abs(inner_grid(one, one) - 4 * np.pi ** 2) < 1e-12


def test_native_weights_sum_and_sign(grid64):
    w = grid64.native_theta_weights
    assert np.all(w > -1e-15)
    # sum of theta weights is int_0^pi sin = 2; with the phi measure, 4*pi
    assert abs(np.sum(w) - 2.0) < 1e-12
    assert abs(grid64.n_phi * grid64.h_phi * np.sum(w) - 4 * np.pi) < 1e-11


# ---- forward Laplacian -------------------------------------------------------


@pytest.mark.parametrize("n", [32, 64])
def test_spherical_laplacian_eigenfunctions(n):
    grid = Grid(n, n)
    for d, m, kind, f in harmonic_basis(grid, 4):
        lap = spherical_laplacian(f)
        scale = np.max(np.abs(f.values)) * eigenvalue(d)
        assert np.max(np.abs(lap.values + eigenvalue(d) * f.values)) <= 1e-10 * scale
