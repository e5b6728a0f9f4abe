import numpy as np
import pytest

from spherepf import (
    BinaryParams,
    SphereField,
    TernaryParams,
    W,
    Wp,
    energy_binary,
    energy_modified_binary,
    energy_modified_ternary,
    energy_ternary,
    stability_constant_binary,
    stability_constants_ternary,
    tau_max_binary,
    tau_max_ternary,
    w2,
    w2_partials,
)
from spherepf.dfs import glide
from spherepf.energetics import LIPSCHITZ_WPP, POTENTIAL_WINDOW, volume, volume_target

from _oracles import central_difference
from conftest import random_bmc_field


# ---- potential ----------------------------------------------------------------


def test_w_point_values():
    assert W(0.0) == 0.0
    assert W(1.0) == 0.0
    assert W(0.5) == pytest.approx(9.0 / 8.0, abs=1e-15)
    assert W(0.15) == pytest.approx(0.2926125, abs=1e-15)
    assert Wp(0.0) == 0.0
    assert Wp(1.0) == 0.0
    assert Wp(0.5) == 0.0
    assert Wp(0.25) == pytest.approx(27.0 / 8.0, abs=1e-14)


def test_w_extension_c1_and_nonnegative():
    us = np.linspace(-1.0, 2.0, 601)
    for u in us:
        fd = central_difference(W, float(u))
        assert abs(fd - Wp(float(u))) < 1e-6
    assert np.all(W(us) >= 0.0)


def test_w_quadratic_growth_outside_window():
    a, b = POTENTIAL_WINDOW
    # W' is affine beyond the window with slope LIPSCHITZ_WPP
    for u0, u1 in ((b + 0.5, b + 1.5), (a - 0.5, a - 1.5)):
        slope = (Wp(u1) - Wp(u0)) / (u1 - u0)
        assert slope == pytest.approx(LIPSCHITZ_WPP, rel=1e-12)
    assert LIPSCHITZ_WPP == pytest.approx(36.0 * (6 * 1.5 ** 2 - 6 * 1.5 + 1), abs=1e-12)


def test_w_symmetry_about_half():
    us = np.linspace(-0.4, 1.4, 37)
    assert np.allclose(W(us), W(1.0 - us), atol=1e-12)
    assert np.allclose(Wp(us), -Wp(1.0 - us), atol=1e-12)


def test_w2_partials_special_points():
    d1, d2 = w2_partials(1.0 / 3.0, 1.0 / 3.0)
    assert abs(d1) < 1e-13 and abs(d2) < 1e-13
    d1, d2 = w2_partials(1.0, 0.0)
    assert abs(d1) < 1e-13 and abs(d2) < 1e-13


def test_w2_partials_match_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(10):
        u1, u2 = rng.uniform(-0.3, 1.3, 2)
        d1, d2 = w2_partials(u1, u2)
        fd1 = central_difference(lambda x: w2(x, u2), u1)
        fd2 = central_difference(lambda x: w2(u1, x), u2)
        assert abs(d1 - fd1) < 1e-6
        assert abs(d2 - fd2) < 1e-6


# ---- energies -------------------------------------------------------------------


def _params(eps=0.5, omega=0.15, gamma=100.0, M=1000.0, **kw):
    return BinaryParams(epsilon=eps, omega=omega, gamma=gamma, M=M, **kw)


def test_energy_constant_state(grid32, plan32):
    p = _params()
    u = SphereField(grid32, np.full((32, 32), p.omega))
    expect = 4 * np.pi * W(p.omega) / p.epsilon
    assert energy_binary(u, p, plan32) == pytest.approx(expect, rel=1e-12)


def test_energy_zero_state_penalty_only(grid32, plan32):
    p = _params(gamma=0.0)
    u = SphereField(grid32, np.zeros((32, 32)))
    expect = 500.0 * (0.15 * 4 * np.pi) ** 2
    assert energy_binary(u, p, plan32) == pytest.approx(expect, rel=1e-12)


def test_energy_glide_invariant(grid32, plan32):
    p = _params()
    u = random_bmc_field(grid32, 3)
    u2 = SphereField(grid32, glide(u))
    assert energy_binary(u, p, plan32) == pytest.approx(
        energy_binary(u2, p, plan32), rel=1e-12)


def test_energy_ternary_constants(grid32, plan32):
    p = TernaryParams(epsilon=0.5, omega1=0.09, omega2=0.09,
                      gamma11=100.0, gamma22=100.0)
    u1 = SphereField(grid32, np.full((32, 32), p.omega1))
    u2 = SphereField(grid32, np.full((32, 32), p.omega2))
    expect = 4 * np.pi * w2(p.omega1, p.omega2) / p.epsilon
    assert energy_ternary(u1, u2, p, plan32) == pytest.approx(expect, rel=1e-12)

    z = SphereField(grid32, np.zeros((32, 32)))
    val = energy_ternary(z, z, p, plan32)
    expect = (2 * 500.0 * (0.09 * 4 * np.pi) ** 2
              + 4 * np.pi * w2(0.0, 0.0) / p.epsilon)
    assert val == pytest.approx(expect, rel=1e-12)


def test_energy_ternary_reduces_to_binary_when_partner_is_zero(grid32, plan32):
    # exact reduction uses u2 = 0: W(1-u) = W(u) makes W2(u, 0) = W(u)
    pt = TernaryParams(epsilon=0.5, omega1=0.15, omega2=0.09,
                       gamma11=100.0, gamma22=50.0, gamma12=0.0)
    pb = BinaryParams(epsilon=0.5, omega=0.15, gamma=100.0, M=pt.M1)
    u1 = random_bmc_field(grid32, 8)
    u2 = SphereField(grid32, np.zeros((32, 32)))
    et = energy_ternary(u1, u2, pt, plan32)
    eb = energy_binary(u1, pb, plan32)
    const = 0.5 * pt.M2 * (0.09 * 4 * np.pi) ** 2  # species-2 penalty offset
    assert et == pytest.approx(eb + const, rel=1e-10)


def test_modified_energy_reduces_and_dominates(grid32, plan32):
    p = _params(kappa=2000.0, beta=0.0, tau=1e-3)
    u = random_bmc_field(grid32, 4)
    assert energy_modified_binary(u, u, p, plan32) == pytest.approx(
        energy_binary(u, p, plan32), rel=1e-12)
    v = random_bmc_field(grid32, 5)
    assert energy_modified_binary(u, v, p, plan32) >= energy_binary(u, p, plan32)

    pt = TernaryParams(epsilon=0.5, omega1=0.09, omega2=0.09,
                       gamma11=100.0, gamma22=100.0)
    w1 = random_bmc_field(grid32, 6)
    w2f = random_bmc_field(grid32, 7)
    assert energy_modified_ternary(w1, w1, w2f, w2f, pt, plan32) == pytest.approx(
        energy_ternary(w1, w2f, pt, plan32), rel=1e-12)


# ---- stability constants ---------------------------------------------------------


def test_stability_constant_formula():
    p = _params(eps=0.3, gamma=0.0, M=0.0)
    assert stability_constant_binary(p, 2.0) == pytest.approx(
        LIPSCHITZ_WPP / 0.6, rel=1e-14)

    p = _params(eps=0.2454, gamma=100.0, M=1000.0)
    expect = LIPSCHITZ_WPP / (2 * 0.2454) + 0.5 * 100.0 * 2.0 + 500.0 * 4 * np.pi
    C = stability_constant_binary(p, 2.0)
    assert C == pytest.approx(expect, rel=1e-14)
    assert tau_max_binary(p, 2.0) == pytest.approx(1.0 / (3.0 * expect), rel=1e-14)


def test_stability_constant_monotone_in_M():
    p1 = _params(M=1000.0)
    p2 = _params(M=2000.0)
    C1, C2 = stability_constant_binary(p1), stability_constant_binary(p2)
    assert C2 > C1
    t1, t2 = tau_max_binary(p1), tau_max_binary(p2)
    assert t2 < t1
    assert t2 >= t1 / 2  # doubling M at most halves the bound


def test_stability_constants_ternary():
    p = TernaryParams(epsilon=0.2454, omega1=0.09, omega2=0.09,
                      gamma11=350.0, gamma22=350.0, gamma12=100.0)
    C1, C2 = stability_constants_ternary(p, 2.0)
    base = LIPSCHITZ_WPP / (2 * 0.2454) + 500.0 * 4 * np.pi
    assert C1 == pytest.approx(base + 0.5 * 450.0 * 2.0, rel=1e-14)
    assert C1 == C2
    assert tau_max_ternary(p, 2.0) == pytest.approx(1.0 / (3 * C1), rel=1e-14)


def test_param_validation():
    with pytest.raises(ValueError):
        BinaryParams(epsilon=-1.0, omega=0.15, gamma=1.0)
    with pytest.raises(ValueError):
        BinaryParams(epsilon=1.0, omega=1.5, gamma=1.0)
    with pytest.raises(ValueError):
        TernaryParams(epsilon=1.0, omega1=0.6, omega2=0.5,
                      gamma11=1.0, gamma22=1.0)


def test_volume_weighting_switch(grid32):
    u = SphereField(grid32, np.full((32, 32), 0.3))
    assert volume(u, "spherical") == pytest.approx(0.3 * 4 * np.pi, rel=1e-13)
    assert volume(u, "unweighted") == pytest.approx(0.3 * 4 * np.pi ** 2, rel=1e-13)
    assert volume_target(0.3, "spherical") == pytest.approx(0.3 * 4 * np.pi)
    assert volume_target(0.3, "unweighted") == pytest.approx(0.3 * 4 * np.pi ** 2)
    with pytest.raises(ValueError):
        volume(u, "other")
