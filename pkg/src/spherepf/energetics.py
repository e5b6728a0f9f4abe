"""Double-well potential, model parameters, and discrete energies.

The bulk potential is W(u) = 18 (u^2 - u)^2 on the window [-0.5, 1.5] and a
C^2 quadratic continuation outside it, so W'' is globally bounded; the
Lipschitz constant of W' (sup |W''|) is attained at the window edges and
equals 198.  Energies integrate with the sin(theta) Jacobian; the gradient
term is evaluated as

    |grad u|^2 = u_theta^2 + (u_phi / sin theta)^2

with the bounded pole limit for the second factor, which keeps the
integrand smooth on the doubled grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dfs import (
    SphereField,
    SPHERE_AREA,
    inner_grid,
    inner_weighted,
    integrate_sphere,
    norm_weighted,
    phi_derivative_over_sin,
    theta_derivative,
)
from .helmholtz import SolverPlan, inv_laplacian_meanfree

__all__ = [
    "POTENTIAL_WINDOW",
    "LIPSCHITZ_WPP",
    "W",
    "Wp",
    "w2",
    "w2_partials",
    "BinaryParams",
    "TernaryParams",
    "volume",
    "volume_target",
    "energy_binary",
    "energy_ternary",
    "energy_modified_binary",
    "energy_modified_ternary",
    "stability_constant_binary",
    "tau_max_binary",
    "stability_constants_ternary",
    "tau_max_ternary",
    "INV_NORM_BOUND",
]

POTENTIAL_WINDOW = (-0.5, 1.5)

# mesh-independent bound on ||(-Lap_h)^{-1}||; alpha_k >= k^2 - 1/2 gives 1/alpha_1 = 2
INV_NORM_BOUND = 2.0


def _w_core(u):
    return 18.0 * (u * u - u) ** 2


def _wp_core(u):
    return 36.0 * u * (u - 1.0) * (2.0 * u - 1.0)


def _wpp_core(u):
    return 36.0 * (6.0 * u * u - 6.0 * u + 1.0)


# sup |W''| over the reals for the extended potential (edges of the window)
LIPSCHITZ_WPP = float(_wpp_core(POTENTIAL_WINDOW[1]))


def _extended(u, core, edge_fn):
    arr = np.atleast_1d(np.asarray(u, dtype=float))
    a, b = POTENTIAL_WINDOW
    out = core(np.clip(arr, a, b))
    for edge in (a, b):
        mask = (arr < edge) if edge == a else (arr > edge)
        if np.any(mask):
            out[mask] = edge_fn(edge, arr[mask] - edge)
    return float(out[0]) if np.isscalar(u) or np.ndim(u) == 0 else out


def W(u):
    """Extended double-well potential, array-safe."""
    return _extended(
        u, _w_core,
        lambda e, d: _w_core(e) + _wp_core(e) * d + 0.5 * _wpp_core(e) * d * d,
    )


def Wp(u):
    """Derivative of the extended potential."""
    return _extended(
        u, _wp_core,
        lambda e, d: _wp_core(e) + _wpp_core(e) * d,
    )


def w2(u1, u2):
    """Ternary well: (W(u1) + W(u2) + W(1 - u1 - u2)) / 2."""
    return 0.5 * (W(u1) + W(u2) + W(1.0 - u1 - u2))


def w2_partials(u1, u2):
    """(dW2/du1, dW2/du2) using the extended Wp."""
    tail = Wp(1.0 - u1 - u2)
    return 0.5 * (Wp(u1) - tail), 0.5 * (Wp(u2) - tail)


# ---- parameters -------------------------------------------------------------


@dataclass
class BinaryParams:
    """Parameters of the penalized binary (Ohta-Kawasaki type) flow."""

    epsilon: float
    omega: float
    gamma: float
    M: float = 1000.0
    kappa: float = 2000.0
    beta: float = 0.0
    kappa_star: float | None = None  # first-step stabilizer, defaults to kappa
    beta_star: float = 0.0
    tau: float = 1e-3

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.omega < 1.0:
            raise ValueError("omega must lie in (0, 1)")
        if min(self.gamma, self.M, self.kappa, self.beta, self.beta_star) < 0:
            raise ValueError("gamma, M and stabilizers must be nonnegative")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.kappa_star is None:
            self.kappa_star = self.kappa
        if self.kappa_star < 0:
            raise ValueError("kappa_star must be nonnegative")


@dataclass
class TernaryParams:
    """Parameters of the penalized ternary (Nakazawa-Ohta type) flow.

    The cross repulsion is symmetric, gamma12 = gamma21.
    """

    epsilon: float
    omega1: float
    omega2: float
    gamma11: float
    gamma22: float
    gamma12: float = 0.0
    M1: float = 1000.0
    M2: float = 1000.0
    kappa1: float = 2000.0
    kappa2: float = 2000.0
    beta1: float = 0.0
    beta2: float = 0.0
    kappa1_star: float | None = None
    kappa2_star: float | None = None
    beta1_star: float = 0.0
    beta2_star: float = 0.0
    tau: float = 2e-4

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        for name in ("omega1", "omega2"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.omega1 + self.omega2 >= 1.0:
            raise ValueError("omega1 + omega2 must be < 1")
        for name in ("gamma11", "gamma22", "gamma12", "M1", "M2",
                     "kappa1", "kappa2", "beta1", "beta2",
                     "beta1_star", "beta2_star"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.kappa1_star is None:
            self.kappa1_star = self.kappa1
        if self.kappa2_star is None:
            self.kappa2_star = self.kappa2

    @property
    def gamma21(self) -> float:
        return self.gamma12


# ---- volume functional -------------------------------------------------------


def volume(u: SphereField, weighting: str = "spherical") -> float:
    """Integral entering the volume penalty.

    "spherical" is the sin-weighted integral (measure 4*pi); "unweighted" is
    the doubled-grid collocation sum (measure 4*pi^2), kept as the literal
    discrete-inner-product variant.
    """
    if weighting == "spherical":
        return integrate_sphere(u)
    if weighting == "unweighted":
        g = u.grid
        return float(np.sum(u.values) * g.h_phi * g.h_theta)
    raise ValueError(f"unknown weighting {weighting!r}")


def volume_target(omega: float, weighting: str = "spherical") -> float:
    if weighting == "spherical":
        return omega * SPHERE_AREA
    if weighting == "unweighted":
        return omega * 4.0 * np.pi ** 2
    raise ValueError(f"unknown weighting {weighting!r}")


# ---- energies ---------------------------------------------------------------


def _grad_fields(u: SphereField):
    return theta_derivative(u), phi_derivative_over_sin(u)


def energy_binary(u: SphereField, p: BinaryParams, plan: SolverPlan,
                  weighting: str = "spherical") -> float:
    """Penalized binary free energy.

    (eps/2)||grad u||^2 + (1/eps) int W(u) + (gamma/2) <(-Lap)^{-1}(u-w), u-w>
    + (M/2)(int u - w|O|)^2, all integrals spherical.
    """
    g = u.grid
    u_t, v = _grad_fields(u)
    grad = integrate_sphere(SphereField(g, u_t * u_t + v * v))
    bulk = integrate_sphere(SphereField(g, W(u.values)))
    total = 0.5 * p.epsilon * grad + bulk / p.epsilon
    if p.gamma != 0.0:
        dev = SphereField(g, u.values - p.omega)
        psi = inv_laplacian_meanfree(plan, dev)
        total += 0.5 * p.gamma * inner_weighted(psi, dev)
    if p.M != 0.0:
        pen = volume(u, weighting) - volume_target(p.omega, weighting)
        total += 0.5 * p.M * pen * pen
    return float(total)


def energy_ternary(u1: SphereField, u2: SphereField, p: TernaryParams,
                   plan: SolverPlan, weighting: str = "spherical") -> float:
    """Penalized ternary free energy with the cross-gradient coupling."""
    g = u1.grid
    u1_t, v1 = _grad_fields(u1)
    u2_t, v2 = _grad_fields(u2)
    grad = integrate_sphere(SphereField(
        g, u1_t * u1_t + v1 * v1 + u2_t * u2_t + v2 * v2 + u1_t * u2_t + v1 * v2))
    bulk = integrate_sphere(SphereField(g, w2(u1.values, u2.values)))
    total = 0.5 * p.epsilon * grad + bulk / p.epsilon

    devs = (SphereField(g, u1.values - p.omega1), SphereField(g, u2.values - p.omega2))
    gam = ((p.gamma11, p.gamma12), (p.gamma12, p.gamma22))
    psis = [None, None]
    for i in range(2):
        for j in range(2):
            if gam[i][j] == 0.0:
                continue
            if psis[i] is None:
                psis[i] = inv_laplacian_meanfree(plan, devs[i])
            total += 0.5 * gam[i][j] * inner_weighted(psis[i], devs[j])
    for u, om, M in ((u1, p.omega1, p.M1), (u2, p.omega2, p.M2)):
        if M != 0.0:
            pen = volume(u, weighting) - volume_target(om, weighting)
            total += 0.5 * M * pen * pen
    return float(total)


def _diff_field(a: SphereField, b: SphereField) -> SphereField:
    return SphereField(a.grid, a.values - b.values)


def energy_modified_binary(u_n: SphereField, u_nm1: SphereField, p: BinaryParams,
                           plan: SolverPlan, inv_norm_bound: float = INV_NORM_BOUND,
                           weighting: str = "spherical") -> float:
    """Lyapunov functional of the two-step scheme: plain energy plus history
    terms; non-increasing for tau <= tau_max_binary."""
    d = _diff_field(u_n, u_nm1)
    dn2 = inner_weighted(d, d)
    C = stability_constant_binary(p, inv_norm_bound)
    total = energy_binary(u_n, p, plan, weighting)
    total += (p.kappa / (2.0 * p.epsilon) + 1.0 / (4.0 * p.tau) + C) * dn2
    if p.gamma != 0.0 and p.beta != 0.0:
        psi = inv_laplacian_meanfree(plan, d)
        total += 0.5 * p.gamma * p.beta * inner_weighted(psi, d)
    return float(total)


def energy_modified_ternary(u1_n, u1_nm1, u2_n, u2_nm1, p: TernaryParams,
                            plan: SolverPlan, inv_norm_bound: float = INV_NORM_BOUND,
                            weighting: str = "spherical") -> float:
    # kappa_i/(2 eps) form, consistent with the binary functional
    C1, C2 = stability_constants_ternary(p, inv_norm_bound)
    total = energy_ternary(u1_n, u2_n, p, plan, weighting)
    for (un, unm1, kap, gii, bi, Ci) in (
        (u1_n, u1_nm1, p.kappa1, p.gamma11, p.beta1, C1),
        (u2_n, u2_nm1, p.kappa2, p.gamma22, p.beta2, C2),
    ):
        d = _diff_field(un, unm1)
        total += (kap / (2.0 * p.epsilon) + 1.0 / (4.0 * p.tau) + Ci) * inner_weighted(d, d)
        if gii != 0.0 and bi != 0.0:
            psi = inv_laplacian_meanfree(plan, d)
            total += 0.5 * gii * bi * inner_weighted(psi, d)
    return float(total)


# ---- stability constants -----------------------------------------------------


def stability_constant_binary(p: BinaryParams, inv_norm_bound: float = INV_NORM_BOUND) -> float:
    """C = L_W''/(2 eps) + (gamma/2)||(-Lap)^{-1}|| + (M/2)|Omega|."""
    if inv_norm_bound <= 0:
        raise ValueError("inv_norm_bound must be positive")
    return (LIPSCHITZ_WPP / (2.0 * p.epsilon)
            + 0.5 * p.gamma * inv_norm_bound
            + 0.5 * p.M * SPHERE_AREA)


def tau_max_binary(p: BinaryParams, inv_norm_bound: float = INV_NORM_BOUND) -> float:
    """Step-size bound tau <= 1/(3C) guaranteeing modified-energy decay."""
    return 1.0 / (3.0 * stability_constant_binary(p, inv_norm_bound))


def stability_constants_ternary(p: TernaryParams,
                                inv_norm_bound: float = INV_NORM_BOUND) -> tuple[float, float]:
    if inv_norm_bound <= 0:
        raise ValueError("inv_norm_bound must be positive")
    base = LIPSCHITZ_WPP / (2.0 * p.epsilon)
    C1 = base + 0.5 * (p.gamma11 + p.gamma12) * inv_norm_bound + 0.5 * p.M1 * SPHERE_AREA
    C2 = base + 0.5 * (p.gamma12 + p.gamma22) * inv_norm_bound + 0.5 * p.M2 * SPHERE_AREA
    return C1, C2


def tau_max_ternary(p: TernaryParams, inv_norm_bound: float = INV_NORM_BOUND) -> float:
    C1, C2 = stability_constants_ternary(p, inv_norm_bound)
    return min(1.0 / (3.0 * C1), 1.0 / (3.0 * C2))
