"""Banded per-mode solvers for the desingularized Helmholtz problem.

The equation (-Lap + alpha) u = f on the sphere is multiplied through by
sin^2(theta) to remove the pole singularities,

    -sin^2 u_tt - sin cos u_t - u_pp + alpha sin^2 u = sin^2 f,

and separates over azimuthal wavenumbers l into pentadiagonal systems on the
polar coefficient vectors.  In the e^{i k theta} basis the building blocks
are the multiplication and derivative operators

    M[sin] = tridiag(-i/2, 0, i/2),  M[cos] = tridiag(1/2, 0, 1/2),
    D      = diag(i k),              k = -n/2 .. n/2-1,

giving the mode matrix  A_l = -M[sin]^2 D^2 - M[sin] M[cos] D + l^2 I
+ alpha M[sin]^2, with right-hand side M[sin]^2 f_l.

For l = 0, alpha = 0 the truncated matrix has a two-dimensional null space:
constants, and the one-sided vector u_k ~ 1/k on odd k >= 1 whose boundary
coupling falls off the wavenumber window.  Uniqueness is restored by
replacing the two redundant equation rows (k = 0 and k = +1, identified from
the left null space): k = 0 becomes the zero-mean quadrature row 2*pi*v with
v_{+-1} = 0, v_k = (1+e^{i k pi})/(1-k^2), and k = +1 becomes the reflection
symmetry row u_{+1} - u_{-1} = 0, which every BMC solution satisfies
identically.  That system is dense in one row, so the constrained mode gets
a cached dense LU; every other mode uses banded LU with partial pivoting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .dfs import (
    Grid,
    SphereField,
    SPHERE_AREA,
    integrate_sphere,
    norm_weighted,
    symmetrize_bmc,
)

__all__ = [
    "SolverError",
    "MeanViolationError",
    "ModeMatrix",
    "assemble_mode",
    "constraint_vector",
    "SolverPlan",
    "solve_helmholtz",
    "inv_laplacian",
    "inv_laplacian_meanfree",
    "inv_norm_ratio",
    "estimate_inv_norm",
]

# |integral of f| <= MEAN_TOL * ||f|| is required of alpha = 0 right-hand sides
MEAN_TOL = 1e-8

_KL = 2  # sub/superdiagonal count of the mode matrices


class SolverError(RuntimeError):
    pass


class MeanViolationError(SolverError):
    """alpha = 0 solve requested for a right-hand side with nonzero mean."""


def _operator_blocks(n: int):
    ks = np.arange(-n // 2, n // 2)
    D = np.diag(1j * ks.astype(complex))
    Msin = np.diag(np.full(n - 1, -0.5j), -1) + np.diag(np.full(n - 1, 0.5j), 1)
    Mcos = np.diag(np.full(n - 1, 0.5 + 0j), -1) + np.diag(np.full(n - 1, 0.5 + 0j), 1)
    return ks, D, Msin, Mcos


def constraint_vector(n: int) -> np.ndarray:
    """Zero-mean row v over shifted wavenumbers, v_{+-1} = 0 by convention."""
    ks = np.arange(-n // 2, n // 2)
    v = np.zeros(n, dtype=complex)
    even = ks % 2 == 0
    v[even] = (1.0 + (-1.0) ** ks[even]) / (1.0 - ks[even] ** 2)
    return v


@dataclass
class ModeMatrix:
    """Assembled operator for one azimuthal wavenumber, acting on shifted
    polar coefficient vectors (k ascending from -n/2)."""

    l: int
    alpha: float
    matrix: np.ndarray  # dense (n, n); pentadiagonal unless constrained
    constrained: bool

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return self.matrix @ vec


def assemble_mode(l: int, alpha: float, n_theta: int, constrain: bool = False) -> ModeMatrix:
    """Build A_l = -M[sin]^2 D^2 - M[sin] M[cos] D + l^2 I + alpha M[sin]^2.

    constrain=True applies the l = 0 row surgery described in the module
    docstring; it is only meaningful for l = 0, alpha = 0.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    n = n_theta
    _, D, Msin, Mcos = _operator_blocks(n)
    Msin2 = Msin @ Msin
    A = -Msin2 @ D @ D - Msin @ Mcos @ D + (l * l) * np.eye(n) + alpha * Msin2
    if constrain:
        A[n // 2, :] = 2.0 * np.pi * constraint_vector(n)
        A[n // 2 + 1, :] = 0.0
        A[n // 2 + 1, n // 2 + 1] = 1.0
        A[n // 2 + 1, n // 2 - 1] = -1.0
    return ModeMatrix(l, float(alpha), A, constrain)


def _apply_msin2(cs: np.ndarray) -> np.ndarray:
    """(truncated M[sin])^2 applied along the last axis of shifted coeffs."""
    def msin(x):
        out = np.zeros_like(x)
        out[..., 1:] += -0.5j * x[..., :-1]
        out[..., :-1] += 0.5j * x[..., 1:]
        return out

    return msin(msin(cs))


def _band_storage(A: np.ndarray) -> np.ndarray:
    # LAPACK general band storage with kl extra fill rows for pivoting
    n = A.shape[0]
    kl = ku = _KL
    ab = np.zeros((2 * kl + ku + 1, n), dtype=complex, order="F")
    for d in range(-kl, ku + 1):
        diag = np.diagonal(A, d)
        cols = np.arange(max(0, d), min(n, n + d))
        ab[kl + ku - d, cols] = diag
    return ab


class SolverPlan:
    """Per-grid factorization cache for the mode systems.

    Factorizations are keyed by (|l|, alpha) since the matrix depends on l
    only through l^2; a time stepper touches a handful of alpha values, so
    the cache stays small.  The plan is immutable after construction apart
    from lazily added factorizations.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        n = grid.n_theta
        _, self._D, self._Msin, self._Mcos = _operator_blocks(n)
        self._Msin2 = self._Msin @ self._Msin
        self._A_base = -self._Msin2 @ self._D @ self._D - self._Msin @ self._Mcos @ self._D
        self._eye = np.eye(n)
        self._factors: dict[tuple[int, float], tuple] = {}

    def mode_matrix(self, l: int, alpha: float) -> np.ndarray:
        n = self.grid.n_theta
        A = self._A_base + (l * l) * self._eye + alpha * self._Msin2
        if l == 0 and alpha == 0.0:
            A[n // 2, :] = 2.0 * np.pi * constraint_vector(n)
            A[n // 2 + 1, :] = 0.0
            A[n // 2 + 1, n // 2 + 1] = 1.0
            A[n // 2 + 1, n // 2 - 1] = -1.0
        return A

    def _factor(self, l: int, alpha: float):
        key = (abs(int(l)), float(alpha))
        fac = self._factors.get(key)
        if fac is not None:
            return fac
        A = self.mode_matrix(key[0], key[1])
        if key == (0, 0.0):
            lu, piv, info = lapack.zgetrf(A)
            kind = "dense"
        else:
            lu, piv, info = lapack.zgbtrf(_band_storage(A), _KL, _KL)
            kind = "band"
        if info != 0:
            raise SolverError(
                f"singular mode system: l={key[0]}, alpha={key[1]!r} (info={info})"
            )
        fac = (kind, lu, piv)
        self._factors[key] = fac
        return fac

    def solve_mode(self, l: int, alpha: float, rhs: np.ndarray) -> np.ndarray:
        """Solve one mode system for a shifted polar coefficient vector."""
        n = self.grid.n_theta
        kind, lu, piv = self._factor(l, alpha)
        b = rhs.reshape(n, -1)
        if kind == "dense":
            b = b.copy()
            b[n // 2, :] = 0.0      # zero-mean row
            b[n // 2 + 1, :] = 0.0  # symmetry row
            x, info = lapack.zgetrs(lu, piv, b)
        else:
            x, info = lapack.zgbtrs(lu, _KL, _KL, b, piv)
        if info != 0:
            raise SolverError(f"mode solve failed: l={l}, info={info}")
        return x.reshape(rhs.shape)


def _solve_field(plan: SolverPlan, values: np.ndarray, alpha: float) -> np.ndarray:
    """Core solve on raw values.  Internally uses an rfft over phi (real
    input) and true-coefficient phases over theta; the uniform phi phase per
    azimuthal row cancels through the row-wise solve."""
    g = plan.grid
    n_t = g.n_theta
    C = np.fft.fft(np.fft.rfft(values, axis=0), axis=1)
    C *= g._sign_theta[None, :]
    C = np.fft.fftshift(C, axes=1)
    rhs = _apply_msin2(C)
    out = np.empty_like(C)
    for i in range(C.shape[0]):
        out[i] = plan.solve_mode(i, alpha, rhs[i])
    out = np.fft.ifftshift(out, axes=1)
    out *= g._sign_theta[None, :]
    vals = np.fft.irfft(np.fft.ifft(out, axis=1), n=g.n_phi, axis=0)
    return np.ascontiguousarray(vals.real)


def solve_helmholtz(plan: SolverPlan, f: SphereField, alpha: float) -> SphereField:
    """Solve (-Lap + alpha) u = f on the sphere.

    For alpha = 0 the right-hand side must have (numerically) zero spherical
    mean and the returned solution is pinned to zero mean by the constraint
    row.  The output is re-symmetrized, so its glide defect is at rounding
    level.
    """
    if f.grid != plan.grid:
        raise ValueError("field grid does not match plan grid")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if alpha == 0.0:
        mean = integrate_sphere(f)
        scale = max(norm_weighted(f), np.finfo(float).tiny)
        if abs(mean) > MEAN_TOL * scale:
            raise MeanViolationError(
                f"alpha=0 solve needs zero-mean f: |int f| = {abs(mean):.3e} "
                f"exceeds {MEAN_TOL:.0e} * ||f|| = {MEAN_TOL * scale:.3e}"
            )
    u = _solve_field(plan, f.values, float(alpha))
    return symmetrize_bmc(SphereField(plan.grid, u))


def inv_laplacian(plan: SolverPlan, f: SphereField) -> SphereField:
    """(-Lap)^{-1} f for zero-mean f; alias of solve_helmholtz(alpha=0)."""
    return solve_helmholtz(plan, f, 0.0)


def inv_laplacian_meanfree(plan: SolverPlan, f: SphereField) -> SphereField:
    """(-Lap)^{-1} applied to the mean-free part of f.

    The dynamics' nonlocal terms act on fields whose mean is only
    penalty-controlled; the inverse Laplacian is defined on the mean-free
    subspace, so the spherical mean is projected out first.
    """
    mean = integrate_sphere(f) / SPHERE_AREA
    shifted = SphereField(f.grid, f.values - mean)
    return solve_helmholtz(plan, shifted, 0.0)


def inv_norm_ratio(plan: SolverPlan, f: SphereField) -> float:
    """||(-Lap)^{-1} f|| / ||f|| in the spherical L2 norm."""
    nf = norm_weighted(f)
    if nf == 0.0:
        raise ValueError("zero field")
    u = inv_laplacian_meanfree(plan, f)
    return norm_weighted(u) / nf


def estimate_inv_norm(plan: SolverPlan, trials: int, seed: int) -> float:
    """Max of inv_norm_ratio over seeded random zero-mean fields.

    Each trial draws white noise on the native grid, doubles and
    symmetrizes it, and projects out the mean.  The draw count per trial is
    fixed, so estimates are monotone in `trials` for a fixed seed.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    from .dfs import extend_bmc  # local import to avoid cycle at module load

    g = plan.grid
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(trials):
        native = rng.standard_normal((g.n_phi, g.native_n_theta))
        f = symmetrize_bmc(extend_bmc(g, native))
        mean = integrate_sphere(f) / SPHERE_AREA
        f = SphereField(g, f.values - mean)
        best = max(best, inv_norm_ratio(plan, f))
    return best
