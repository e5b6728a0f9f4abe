"""Double Fourier sphere (DFS) grids and transforms.

Functions on the unit sphere are parameterized by the azimuth phi and the
polar angle theta, sampled on the native rectangle [-pi, pi) x [0, pi] and
doubled in theta to the periodic rectangle [-pi, pi)^2.  The doubling uses
the glide reflection

    f(phi, -theta) = f(phi + pi, theta),

which makes smooth sphere functions periodic in both directions
(block-mirror-centrosymmetric, BMC structure), so plain FFTs apply.

Conventions fixed here and used everywhere else:

* value arrays have shape (n_phi, n_theta): axis 0 is phi, axis 1 is theta;
* nodes are phi_i = -pi + i*h_phi, theta_j = -pi + j*h_theta;
* spectral coefficients are true coefficients of e^{i*k*theta} e^{i*l*phi}
  with k the polar and l the azimuthal wavenumber, stored in standard FFT
  order (the -pi grid origin is absorbed by (-1)^k, (-1)^l phase factors);
* spherical integrals carry the sin(theta) Jacobian and are evaluated with
  wavenumber-space weights that are exact for band-limited integrands.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Grid",
    "SphereField",
    "SpectralCoeffs",
    "BmcDefectWarning",
    "extend_bmc",
    "restrict",
    "glide",
    "bmc_defect",
    "symmetrize_bmc",
    "analyze",
    "synthesize",
    "diff",
    "theta_derivative",
    "phi_derivative",
    "phi_derivative_over_sin",
    "spherical_laplacian",
    "integrate_sphere",
    "inner_weighted",
    "inner_grid",
    "norm_weighted",
    "norm_grid",
    "norm_inf",
]

SPHERE_AREA = 4.0 * np.pi

# restriction of a field whose glide defect exceeds this emits a warning
BMC_WARN_TOL = 1e-10


class BmcDefectWarning(UserWarning):
    """A field fed to a BMC-only operation is visibly asymmetric."""


def _check_even(name, n):
    if n < 2 or n % 2 != 0:
        raise ValueError(f"{name} must be a positive even integer, got {n}")


class Grid:
    """Uniform collocation grid on the doubled rectangle [-pi, pi)^2.

    Everything derivable from (n_phi, n_theta) is precomputed here once:
    nodes, wavenumbers, phase signs for the -pi origin, sin/cos rows with
    exact pole values, and the sin(theta)-quadrature row weights.
    """

    def __init__(self, n_phi: int, n_theta: int):
        _check_even("n_phi", n_phi)
        _check_even("n_theta", n_theta)
        self.n_phi = int(n_phi)
        self.n_theta = int(n_theta)
        self.h_phi = 2.0 * np.pi / self.n_phi
        self.h_theta = 2.0 * np.pi / self.n_theta
        self.phi = -np.pi + self.h_phi * np.arange(self.n_phi)
        self.theta = -np.pi + self.h_theta * np.arange(self.n_theta)

        # integer wavenumbers in standard FFT order
        self.az_wavenumbers = np.fft.fftfreq(self.n_phi, 1.0 / self.n_phi).astype(int)
        self.po_wavenumbers = np.fft.fftfreq(self.n_theta, 1.0 / self.n_theta).astype(int)
        self._sign_phi = np.where(self.az_wavenumbers % 2 == 0, 1.0, -1.0)
        self._sign_theta = np.where(self.po_wavenumbers % 2 == 0, 1.0, -1.0)

        # pole rows of the doubled grid: theta = -pi (j=0) and theta = 0
        self.pole_rows = (0, self.n_theta // 2)
        self.sin_theta = np.sin(self.theta)
        self.cos_theta = np.cos(self.theta)
        self.sin_theta[list(self.pole_rows)] = 0.0
        self.cos_theta[0] = -1.0
        self.cos_theta[self.n_theta // 2] = 1.0

        self.theta_weights = self._theta_weights()
        self.native_theta_weights = self._native_weights()

    # ---- quadrature weights -------------------------------------------------

    def _polar_moment(self):
        # w_k = int_0^pi e^{ik theta} sin(theta) dtheta
        ks = np.arange(-self.n_theta // 2, self.n_theta // 2)
        w = np.zeros(self.n_theta, dtype=complex)
        even = ks % 2 == 0
        w[even] = (1.0 + (-1.0) ** ks[even]) / (1.0 - ks[even] ** 2)
        w[ks == 1] = 0.5j * np.pi
        w[ks == -1] = -0.5j * np.pi
        return ks, w

    def _theta_weights(self):
        # row weight omega_j such that  int f sin = sum_j omega_j * (h_phi sum_i f_ij);
        # exact for integrands band-limited on the doubled grid
        ks, w = self._polar_moment()
        phase = np.exp(-1j * np.outer(ks, self.theta))
        om = np.real(w @ phase) / self.n_theta
        return om

    def _native_weights(self):
        # weights on theta = m*h, m = 0..n_theta/2, folding the glide-mirror rows
        n = self.n_theta
        om = self.theta_weights
        w = np.empty(n // 2 + 1)
        w[0] = om[n // 2]
        w[n // 2] = om[0]
        for m in range(1, n // 2):
            w[m] = om[n // 2 + m] + om[n // 2 - m]
        return w

    # ---- misc ---------------------------------------------------------------

    @property
    def native_n_theta(self) -> int:
        return self.n_theta // 2 + 1

    def native_nodes(self):
        return self.phi, self.h_theta * np.arange(self.native_n_theta)

    def native_cell_areas(self) -> np.ndarray:
        """Quadrature weight of each native cell, shape (n_phi, n_theta/2+1)."""
        return np.broadcast_to(
            self.h_phi * self.native_theta_weights, (self.n_phi, self.native_n_theta)
        ).copy()

    def meshgrid(self):
        return np.meshgrid(self.phi, self.theta, indexing="ij")

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and self.n_phi == other.n_phi
            and self.n_theta == other.n_theta
        )

    def __hash__(self):
        return hash((self.n_phi, self.n_theta))

    def __repr__(self):
        return f"Grid(n_phi={self.n_phi}, n_theta={self.n_theta})"


@dataclass
class SphereField:
    """Real grid function on the doubled domain; state of the dynamics."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        expected = (self.grid.n_phi, self.grid.n_theta)
        if self.values.shape != expected:
            raise ValueError(f"field shape {self.values.shape} != grid shape {expected}")

    def copy(self) -> "SphereField":
        return SphereField(self.grid, self.values.copy())


@dataclass
class SpectralCoeffs:
    """Double Fourier coefficients of a SphereField, standard FFT order.

    coeffs[i, j] multiplies e^{i*l*phi} e^{i*k*theta} with
    l = grid.az_wavenumbers[i] and k = grid.po_wavenumbers[j].
    """

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        expected = (self.grid.n_phi, self.grid.n_theta)
        if self.coeffs.shape != expected:
            raise ValueError(f"coeff shape {self.coeffs.shape} != grid shape {expected}")


# ---- BMC structure ---------------------------------------------------------


def extend_bmc(grid: Grid, native: np.ndarray) -> SphereField:
    """Double a native [-pi,pi) x [0,pi] sample array in theta.

    native[i, m] holds f(phi_i, m*h_theta), m = 0..n_theta/2.  The negative
    rows are filled by the glide reflection f(phi, -theta) = f(phi+pi, theta),
    so restricting the result recovers the input bit-exactly.
    """
    n_phi, n_theta = grid.n_phi, grid.n_theta
    if native.shape != (n_phi, grid.native_n_theta):
        raise ValueError(
            f"native shape {native.shape} != ({n_phi}, {grid.native_n_theta})"
        )
    out = np.empty((n_phi, n_theta), dtype=float)
    out[:, n_theta // 2:] = native[:, : n_theta // 2]
    half = n_phi // 2
    for j in range(n_theta // 2):
        out[:, j] = np.roll(native[:, n_theta // 2 - j], half)
    return SphereField(grid, out)


def glide(field: SphereField) -> np.ndarray:
    """Glide-reflected copy: g(phi, theta) = f(phi + pi, -theta)."""
    g = field.grid
    flipped = field.values[:, (g.n_theta - np.arange(g.n_theta)) % g.n_theta]
    return np.roll(flipped, g.n_phi // 2, axis=0)


def bmc_defect(field: SphereField) -> float:
    """Max-norm distance of the field from its glide reflection."""
    return float(np.max(np.abs(field.values - glide(field))))


def symmetrize_bmc(field: SphereField) -> SphereField:
    """Average a field with its glide reflection; idempotent BMC projection."""
    return SphereField(field.grid, 0.5 * (field.values + glide(field)))


def restrict(field: SphereField) -> np.ndarray:
    """Native-domain samples on [-pi,pi) x [0,pi].

    Inverse of extend_bmc on BMC fields.  A visibly asymmetric input gets a
    BmcDefectWarning; the theta >= 0 half is returned regardless.
    """
    g = field.grid
    defect = bmc_defect(field)
    scale = max(1.0, float(np.max(np.abs(field.values))))
    if defect > BMC_WARN_TOL * scale:
        warnings.warn(
            f"restricting a field with glide defect {defect:.3e}", BmcDefectWarning
        )
    n_theta = g.n_theta
    out = np.empty((g.n_phi, g.native_n_theta), dtype=field.values.dtype)
    out[:, : n_theta // 2] = field.values[:, n_theta // 2:]
    out[:, n_theta // 2] = np.roll(field.values[:, 0], g.n_phi // 2)
    return out


# ---- transforms ------------------------------------------------------------


def analyze(field: SphereField) -> SpectralCoeffs:
    """Forward double Fourier transform, normalization 1/(n_phi*n_theta)."""
    g = field.grid
    c = np.fft.fft2(field.values) / (g.n_phi * g.n_theta)
    c *= g._sign_phi[:, None]
    c *= g._sign_theta[None, :]
    return SpectralCoeffs(g, c)


def synthesize(coeffs: SpectralCoeffs) -> SphereField:
    """Inverse transform back to grid values (real part)."""
    g = coeffs.grid
    c = coeffs.coeffs * g._sign_phi[:, None] * g._sign_theta[None, :]
    vals = np.real(np.fft.ifft2(c)) * (g.n_phi * g.n_theta)
    return SphereField(g, vals)


_DIFF_WHICH = ("theta2", "phi", "phi2")


def diff(coeffs: SpectralCoeffs, which: str) -> SpectralCoeffs:
    """Spectral differentiation: which in {'theta2', 'phi', 'phi2'}."""
    g = coeffs.grid
    if which == "theta2":
        mult = -(g.po_wavenumbers.astype(float) ** 2)[None, :]
    elif which == "phi":
        mult = (1j * g.az_wavenumbers)[:, None]
    elif which == "phi2":
        mult = -(g.az_wavenumbers.astype(float) ** 2)[:, None]
    else:
        raise ValueError(f"which must be one of {_DIFF_WHICH}, got {which!r}")
    return SpectralCoeffs(g, coeffs.coeffs * mult)


def _deriv_values(field: SphereField, po_mult, az_mult) -> np.ndarray:
    g = field.grid
    c = analyze(field).coeffs
    if po_mult is not None:
        c = c * po_mult[None, :]
    if az_mult is not None:
        c = c * az_mult[:, None]
    return synthesize(SpectralCoeffs(g, c)).values


def theta_derivative(field: SphereField) -> np.ndarray:
    return _deriv_values(field, 1j * field.grid.po_wavenumbers, None)


def phi_derivative(field: SphereField) -> np.ndarray:
    return _deriv_values(field, None, 1j * field.grid.az_wavenumbers)


def phi_derivative_over_sin(field: SphereField) -> np.ndarray:
    """u_phi / sin(theta) with L'Hopital values u_phi_theta / cos(theta) at poles.

    Bounded for smooth sphere functions (u_phi vanishes at the poles); the
    pole fill keeps the returned grid function smooth so sin-weighted
    quadrature of its square stays spectrally accurate.
    """
    g = field.grid
    u_p = phi_derivative(field)
    u_pt = _deriv_values(field, 1j * g.po_wavenumbers, 1j * g.az_wavenumbers)
    out = np.empty_like(u_p)
    off = np.ones(g.n_theta, dtype=bool)
    off[list(g.pole_rows)] = False
    out[:, off] = u_p[:, off] / g.sin_theta[off]
    for j in g.pole_rows:
        out[:, j] = u_pt[:, j] / g.cos_theta[j]
    return out


def spherical_laplacian(field: SphereField) -> SphereField:
    """Forward Laplace-Beltrami operator on the sphere, in value space.

    Evaluates sin^2(theta)*Lap(u) = sin^2*u_tt + sin*cos*u_t + u_pp (regular
    everywhere) and divides by sin^2 off the poles.  On a pole row the limit
    is 2 * <u_tt>_phi, the phi-average of the second theta derivative there.
    """
    g = field.grid
    c = analyze(field).coeffs
    k = g.po_wavenumbers
    l = g.az_wavenumbers
    u_tt = synthesize(SpectralCoeffs(g, c * (-(k.astype(float) ** 2))[None, :])).values
    u_t = synthesize(SpectralCoeffs(g, c * (1j * k)[None, :])).values
    u_pp = synthesize(SpectralCoeffs(g, c * (-(l.astype(float) ** 2))[:, None])).values
    s, co = g.sin_theta, g.cos_theta
    q = (s * s) * u_tt + (s * co) * u_t + u_pp
    out = np.empty_like(q)
    off = np.ones(g.n_theta, dtype=bool)
    off[list(g.pole_rows)] = False
    out[:, off] = q[:, off] / (s[off] ** 2)
    for j in g.pole_rows:
        out[:, j] = 2.0 * np.mean(u_tt[:, j])
    return SphereField(g, out)


# ---- integration -----------------------------------------------------------


def integrate_sphere(field: SphereField) -> float:
    """Spherical integral over the native domain, sin(theta)-weighted.

    Exact for band-limited integrands; the 1-field integrates to 4*pi.
    """
    g = field.grid
    line = field.values.sum(axis=0) * g.h_phi
    return float(line @ g.theta_weights)


def inner_weighted(f: SphereField, g_field: SphereField) -> float:
    """Spherical L2 inner product <f, g> = int f*g sin(theta) dtheta dphi."""
    if f.grid != g_field.grid:
        raise ValueError("fields live on different grids")
    return integrate_sphere(SphereField(f.grid, f.values * g_field.values))


def inner_grid(f: SphereField, g_field: SphereField) -> float:
    """Unweighted doubled-grid inner product h_phi*h_theta*sum(f*g).

    The plain collocation product; kept as a diagnostic and for the
    convergence-table error norm.
    """
    if f.grid != g_field.grid:
        raise ValueError("fields live on different grids")
    g = f.grid
    return float(np.sum(f.values * g_field.values) * g.h_phi * g.h_theta)


def norm_weighted(f: SphereField) -> float:
    return float(np.sqrt(max(inner_weighted(f, f), 0.0)))


def norm_grid(f: SphereField) -> float:
    return float(np.sqrt(max(inner_grid(f, f), 0.0)))


def norm_inf(f: SphereField) -> float:
    return float(np.max(np.abs(f.values)))
