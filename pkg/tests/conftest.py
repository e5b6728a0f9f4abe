import numpy as np
import pytest

from spherepf import Grid, SolverPlan, SphereField, symmetrize_bmc
from spherepf.harmonics import harmonic_basis, real_harmonic


@pytest.fixture(scope="session")
def grid16():
    return Grid(16, 16)


@pytest.fixture(scope="session")
def grid32():
    return Grid(32, 32)


@pytest.fixture(scope="session")
def grid64():
    return Grid(64, 64)


@pytest.fixture(scope="session")
def plan32(grid32):
    return SolverPlan(grid32)


@pytest.fixture(scope="session")
def plan64(grid64):
    return SolverPlan(grid64)


def random_bmc_field(grid, seed, zero_mean=False):
    """Seeded band-limited BMC field: random combination of harmonics."""
    rng = np.random.default_rng(seed)
    basis = harmonic_basis(grid, 4)
    vals = np.zeros((grid.n_phi, grid.n_theta))
    for _, _, _, f in basis:
        vals += rng.standard_normal() * f.values / max(1.0, np.max(np.abs(f.values)))
    if not zero_mean:
        vals += rng.standard_normal()
    return SphereField(grid, vals)


def random_rough_bmc_field(grid, seed):
    """Seeded full-bandwidth BMC field from white noise."""
    from spherepf import extend_bmc

    rng = np.random.default_rng(seed)
    native = rng.standard_normal((grid.n_phi, grid.native_n_theta))
    return symmetrize_bmc(extend_bmc(grid, native))
