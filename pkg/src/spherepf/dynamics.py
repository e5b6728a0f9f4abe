"""Stabilized semi-implicit time stepping for the penalized flows.

Bootstrap: one first-order step of size tau1 = min(tau^2, 1), then two-step
BDF2 steps of size tau.  Because the starting pair (u^0 at 0, u^1 at tau1)
is far from tau-spaced, the first BDF2 step uses the variable-step
coefficients with ratio rho = tau/tau1,

    derivative weights  a0 = (1+2 rho)/(1+rho), a1 = 1+rho, a2 = rho^2/(1+rho)
    extrapolation       E[v] = (1+rho) v^n - rho v^{n-1}
    stabilizer          u^{n+1} - (1+rho) u^n + rho u^{n-1}

(rho = 1 recovers the uniform formulas); applying the uniform stencil to the
non-uniform pair costs a full order of temporal accuracy.

Each step is one shifted Helmholtz solve: dividing by eps turns the implicit
operator into (-Lap + alpha) with alpha = (a0/tau + kappa/eps)/eps.  The
nonlinear term is extrapolated, the nonlocal term acts on the extrapolated
state through one inverse-Laplacian solve, and the volume penalty is treated
implicitly: it is spatially constant, so -M(int u^{n+1} - w|O|) amounts to a
closed-form correction of the constant mode after the solve.  (Extrapolating
the penalty as written in the two-step scheme makes the constant mode
unstable once tau*M|O| is large: stability needs 4/tau + 4 kappa/eps >
3M|O|, which the production parameters violate.  The literal variant is
kept behind penalty_mode="extrapolated".)

The ternary system is advanced as a Gauss-Seidel sweep: the u1 solve uses
the extrapolated u2 history; the u2 solve then uses the fresh u1^{n+1} in
the cross gradient, the well partial, and the cross nonlocal term.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

import numpy as np

from .dfs import (
    SphereField,
    SPHERE_AREA,
    bmc_defect,
    norm_inf,
    spherical_laplacian,
    symmetrize_bmc,
)
from .energetics import (
    BinaryParams,
    TernaryParams,
    Wp,
    energy_binary,
    energy_modified_binary,
    energy_modified_ternary,
    energy_ternary,
    volume,
    volume_target,
    w2_partials,
    INV_NORM_BOUND,
)
from .helmholtz import SolverPlan, inv_laplacian_meanfree, solve_helmholtz

__all__ = [
    "DIVERGENCE_LINF",
    "DivergenceError",
    "StopCriterion",
    "TraceRow",
    "RunReport",
    "bdf1_step_binary",
    "bdf2_step_binary",
    "bdf1_step_ternary",
    "bdf2_step_ternary",
    "BinaryStepper",
    "TernaryStepper",
    "run_to_equilibrium",
]

DIVERGENCE_LINF = 1e3

TERMINATIONS = ("converged", "step_cap", "time_cap", "diverged")


class DivergenceError(RuntimeError):
    pass


@dataclass
class StopCriterion:
    """Residual tolerance ||u^{n+1}-u^n||_inf / tau <= tol, with caps."""

    tol: float = 1e-5
    max_steps: int = 2_000_000
    max_time: float = np.inf

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass
class TraceRow:
    step: int
    time: float
    energy: float
    modified_energy: float
    residual: float


@dataclass
class RunReport:
    rows: list = field(default_factory=list)
    termination: str = "step_cap"
    wall_time: float = 0.0
    steps: int = 0
    final_time: float = 0.0
    snapshots: list = field(default_factory=list)


def _bdf2_weights(rho: float):
    a0 = (1.0 + 2.0 * rho) / (1.0 + rho)
    a1 = 1.0 + rho
    a2 = rho * rho / (1.0 + rho)
    return a0, a1, a2


def _implicit_solve(plan, F, eps, a, gamma_beta, M, target, weighting):
    """Solve (a - eps*Lap + gamma*beta*(-Lap)^{-1}P) u + M(vol(u) - target) = F.

    gamma_beta = 0 is a single shifted Helmholtz solve.  Otherwise the
    operator quadratic in A = -Lap factors as eps(A + alpha1)(A + alpha2) on
    the mean-free subspace, giving a pair of shifted solves; the constant
    mode sees only the coefficient a.  The volume penalty is a rank-one
    perturbation by a constant, resolved by the scalar correction below.
    """
    g = plan.grid
    if gamma_beta == 0.0:
        w = solve_helmholtz(plan, SphereField(g, F / eps), a / eps)
    else:
        disc = a * a - 4.0 * eps * gamma_beta
        if disc <= 0.0:
            raise DivergenceError(
                "nonlocal stabilizer too strong for a real shift pair: "
                f"a^2 - 4*eps*gamma*beta = {disc:.3e} <= 0"
            )
        sq = np.sqrt(disc)
        alpha1 = (a + sq) / (2.0 * eps)
        alpha2 = (a - sq) / (2.0 * eps)
        f_mean = volume(SphereField(g, F), "spherical") / SPHERE_AREA
        Fp = SphereField(g, F - f_mean)
        t2 = solve_helmholtz(plan, Fp, alpha2)
        inner = SphereField(g, (Fp.values - alpha2 * t2.values) / eps)
        w = solve_helmholtz(plan, inner, alpha1)
        w = SphereField(g, w.values + f_mean / a)
    if M == 0.0:
        return w
    measure = volume_target(1.0, weighting)
    V = (volume(w, weighting) - target) / (1.0 + M * measure / a)
    return SphereField(g, w.values - M * V / a)


def _guard(u: SphereField, label: str) -> SphereField:
    m = norm_inf(u)
    if not np.isfinite(m) or m > DIVERGENCE_LINF:
        raise DivergenceError(f"{label}: |u|_inf = {m:.3e} exceeds {DIVERGENCE_LINF:.0e}")
    return u


# ---- binary steps ------------------------------------------------------------


def bdf1_step_binary(u0: SphereField, p: BinaryParams, plan: SolverPlan,
                     weighting: str = "spherical",
                     penalty_mode: str = "implicit") -> SphereField:
    """First-order bootstrap step of size tau1 = min(tau^2, 1)."""
    tau1 = min(p.tau ** 2, 1.0)
    eps = p.epsilon
    g = u0.grid
    F = u0.values / tau1 - Wp(u0.values) / eps + (p.kappa_star / eps) * u0.values
    if p.gamma != 0.0:
        psi = inv_laplacian_meanfree(plan, SphereField(g, u0.values - p.omega))
        F = F - p.gamma * psi.values
        if p.beta_star != 0.0:
            F = F + p.gamma * p.beta_star * inv_laplacian_meanfree(plan, u0).values
    a = 1.0 / tau1 + p.kappa_star / eps
    target = volume_target(p.omega, weighting)
    if penalty_mode == "implicit":
        u1 = _implicit_solve(plan, F, eps, a, p.gamma * p.beta_star, p.M, target, weighting)
    else:
        F = F - p.M * (volume(u0, weighting) - target)
        u1 = _implicit_solve(plan, F, eps, a, p.gamma * p.beta_star, 0.0, target, weighting)
    return _guard(symmetrize_bmc(u1), "bdf1 step")


def bdf2_step_binary(u_n: SphereField, u_nm1: SphereField, p: BinaryParams,
                     plan: SolverPlan, rho: float = 1.0,
                     weighting: str = "spherical",
                     penalty_mode: str = "implicit") -> SphereField:
    """One BDF2 step; rho is the step ratio tau/tau_previous (1 after startup)."""
    eps, tau = p.epsilon, p.tau
    g = u_n.grid
    a0, a1, a2 = _bdf2_weights(rho)
    ex = (1.0 + rho) * u_n.values - rho * u_nm1.values
    F = ((a1 * u_n.values - a2 * u_nm1.values) / tau
         - ((1.0 + rho) * Wp(u_n.values) - rho * Wp(u_nm1.values)) / eps
         + (p.kappa / eps) * ex)
    if p.gamma != 0.0:
        psi = inv_laplacian_meanfree(plan, SphereField(g, ex - p.omega))
        F = F - p.gamma * psi.values
        if p.beta != 0.0:
            F = F + p.gamma * p.beta * inv_laplacian_meanfree(plan, SphereField(g, ex)).values
    a = a0 / tau + p.kappa / eps
    target = volume_target(p.omega, weighting)
    if penalty_mode == "implicit":
        u = _implicit_solve(plan, F, eps, a, p.gamma * p.beta, p.M, target, weighting)
    else:
        F = F - p.M * (volume(SphereField(g, ex), weighting) - target)
        u = _implicit_solve(plan, F, eps, a, p.gamma * p.beta, 0.0, target, weighting)
    return _guard(symmetrize_bmc(u), "bdf2 step")


# ---- ternary steps -----------------------------------------------------------


def _ternary_solve(plan, F, p, a, gamma_beta, M, omega, weighting, penalty_mode,
                   explicit_pen_state=None):
    g = plan.grid
    target = volume_target(omega, weighting)
    if penalty_mode == "implicit":
        return _implicit_solve(plan, F, p.epsilon, a, gamma_beta, M, target, weighting)
    F = F - M * (volume(SphereField(g, explicit_pen_state), weighting) - target)
    return _implicit_solve(plan, F, p.epsilon, a, gamma_beta, 0.0, target, weighting)


def bdf1_step_ternary(u1_0: SphereField, u2_0: SphereField, p: TernaryParams,
                      plan: SolverPlan, weighting: str = "spherical",
                      penalty_mode: str = "implicit"):
    """Bootstrap sweep: u1 from the initial data, then u2 using the fresh u1."""
    tau1 = min(p.tau ** 2, 1.0)
    eps = p.epsilon
    g = u1_0.grid

    dW1, _ = w2_partials(u1_0.values, u2_0.values)
    F = (u1_0.values / tau1 - dW1 / eps + (p.kappa1_star / eps) * u1_0.values
         + 0.5 * eps * spherical_laplacian(u2_0).values)
    if p.gamma11 != 0.0:
        F = F - p.gamma11 * inv_laplacian_meanfree(
            plan, SphereField(g, u1_0.values - p.omega1)).values
        if p.beta1_star != 0.0:
            F = F + p.gamma11 * p.beta1_star * inv_laplacian_meanfree(plan, u1_0).values
    if p.gamma12 != 0.0:
        F = F - p.gamma12 * inv_laplacian_meanfree(
            plan, SphereField(g, u2_0.values - p.omega2)).values
    a = 1.0 / tau1 + p.kappa1_star / eps
    u1_1 = _ternary_solve(plan, F, p, a, p.gamma11 * p.beta1_star, p.M1, p.omega1,
                          weighting, penalty_mode, explicit_pen_state=u1_0.values)
    u1_1 = _guard(symmetrize_bmc(u1_1), "ternary bdf1, species 1")

    _, dW2 = w2_partials(u1_1.values, u2_0.values)
    F = (u2_0.values / tau1 - dW2 / eps + (p.kappa2_star / eps) * u2_0.values
         + 0.5 * eps * spherical_laplacian(u1_1).values)
    if p.gamma22 != 0.0:
        F = F - p.gamma22 * inv_laplacian_meanfree(
            plan, SphereField(g, u2_0.values - p.omega2)).values
        if p.beta2_star != 0.0:
            F = F + p.gamma22 * p.beta2_star * inv_laplacian_meanfree(plan, u2_0).values
    if p.gamma21 != 0.0:
        F = F - p.gamma21 * inv_laplacian_meanfree(
            plan, SphereField(g, u1_1.values - p.omega1)).values
    a = 1.0 / tau1 + p.kappa2_star / eps
    u2_1 = _ternary_solve(plan, F, p, a, p.gamma22 * p.beta2_star, p.M2, p.omega2,
                          weighting, penalty_mode, explicit_pen_state=u2_0.values)
    u2_1 = _guard(symmetrize_bmc(u2_1), "ternary bdf1, species 2")
    return u1_1, u2_1


def bdf2_step_ternary(u1_n, u1_nm1, u2_n, u2_nm1, p: TernaryParams,
                      plan: SolverPlan, rho: float = 1.0,
                      weighting: str = "spherical",
                      penalty_mode: str = "implicit"):
    """Gauss-Seidel BDF2 sweep for the ternary system."""
    eps, tau = p.epsilon, p.tau
    g = u1_n.grid
    a0, a1c, a2c = _bdf2_weights(rho)

    ex1 = (1.0 + rho) * u1_n.values - rho * u1_nm1.values
    ex2 = (1.0 + rho) * u2_n.values - rho * u2_nm1.values

    psi2 = None
    if p.gamma12 != 0.0 or p.gamma22 != 0.0:
        psi2 = inv_laplacian_meanfree(plan, SphereField(g, ex2 - p.omega2))

    # species 1: partner terms extrapolated from the u2 history
    dW1_n, _ = w2_partials(u1_n.values, u2_n.values)
    dW1_nm1, _ = w2_partials(u1_nm1.values, u2_nm1.values)
    F = ((a1c * u1_n.values - a2c * u1_nm1.values) / tau
         - ((1.0 + rho) * dW1_n - rho * dW1_nm1) / eps
         + (p.kappa1 / eps) * ex1
         + 0.5 * eps * spherical_laplacian(SphereField(g, ex2)).values)
    if p.gamma11 != 0.0:
        F = F - p.gamma11 * inv_laplacian_meanfree(plan, SphereField(g, ex1 - p.omega1)).values
        if p.beta1 != 0.0:
            F = F + p.gamma11 * p.beta1 * inv_laplacian_meanfree(plan, SphereField(g, ex1)).values
    if p.gamma12 != 0.0:
        F = F - p.gamma12 * psi2.values
    a = a0 / tau + p.kappa1 / eps
    u1 = _ternary_solve(plan, F, p, a, p.gamma11 * p.beta1, p.M1, p.omega1,
                        weighting, penalty_mode, explicit_pen_state=ex1)
    u1 = _guard(symmetrize_bmc(u1), "ternary bdf2, species 1")

    # species 2: partner terms use the fresh u1^{n+1}
    dW2_n = w2_partials(u1.values, u2_n.values)[1]
    dW2_nm1 = w2_partials(u1.values, u2_nm1.values)[1]
    F = ((a1c * u2_n.values - a2c * u2_nm1.values) / tau
         - ((1.0 + rho) * dW2_n - rho * dW2_nm1) / eps
         + (p.kappa2 / eps) * ex2
         + 0.5 * eps * spherical_laplacian(u1).values)
    if p.gamma22 != 0.0:
        F = F - p.gamma22 * psi2.values
        if p.beta2 != 0.0:
            F = F + p.gamma22 * p.beta2 * inv_laplacian_meanfree(plan, SphereField(g, ex2)).values
    if p.gamma21 != 0.0:
        F = F - p.gamma21 * inv_laplacian_meanfree(plan, SphereField(g, u1.values - p.omega1)).values
    a = a0 / tau + p.kappa2 / eps
    u2 = _ternary_solve(plan, F, p, a, p.gamma22 * p.beta2, p.M2, p.omega2,
                        weighting, penalty_mode, explicit_pen_state=ex2)
    u2 = _guard(symmetrize_bmc(u2), "ternary bdf2, species 2")
    return u1, u2


# ---- steppers ----------------------------------------------------------------


class BinaryStepper:
    """Owns the (u^n, u^{n-1}) history of one binary trajectory."""

    def __init__(self, u0: SphereField, p: BinaryParams, plan: SolverPlan,
                 weighting: str = "spherical", penalty_mode: str = "implicit"):
        self.p = p
        self.plan = plan
        self.weighting = weighting
        self.penalty_mode = penalty_mode
        self.u_n = symmetrize_bmc(u0)
        self.u_nm1: SphereField | None = None
        self.tau1 = min(p.tau ** 2, 1.0)
        self.n = 0
        self.t = 0.0

    def step(self) -> float:
        """Advance one step; returns ||u_new - u_old||_inf / tau_used."""
        if self.n == 0:
            u_new = bdf1_step_binary(self.u_n, self.p, self.plan,
                                     self.weighting, self.penalty_mode)
            tau_used = self.tau1
        else:
            rho = self.p.tau / self.tau1 if self.n == 1 else 1.0
            u_new = bdf2_step_binary(self.u_n, self.u_nm1, self.p, self.plan, rho,
                                     self.weighting, self.penalty_mode)
            tau_used = self.p.tau
        residual = norm_inf(SphereField(u_new.grid, u_new.values - self.u_n.values)) / tau_used
        self.u_nm1, self.u_n = self.u_n, u_new
        self.n += 1
        self.t += tau_used
        return residual

    def fields(self):
        return (self.u_n,)

    def energy(self) -> float:
        return energy_binary(self.u_n, self.p, self.plan, self.weighting)

    def modified_energy(self, inv_norm_bound: float = INV_NORM_BOUND) -> float:
        prev = self.u_nm1 if self.u_nm1 is not None else self.u_n
        return energy_modified_binary(self.u_n, prev, self.p, self.plan,
                                      inv_norm_bound, self.weighting)

    def bmc_defect(self) -> float:
        return bmc_defect(self.u_n)


class TernaryStepper:
    """Owns the paired histories of one ternary trajectory."""

    def __init__(self, u1_0: SphereField, u2_0: SphereField, p: TernaryParams,
                 plan: SolverPlan, weighting: str = "spherical",
                 penalty_mode: str = "implicit"):
        self.p = p
        self.plan = plan
        self.weighting = weighting
        self.penalty_mode = penalty_mode
        self.u1_n = symmetrize_bmc(u1_0)
        self.u2_n = symmetrize_bmc(u2_0)
        self.u1_nm1: SphereField | None = None
        self.u2_nm1: SphereField | None = None
        self.tau1 = min(p.tau ** 2, 1.0)
        self.n = 0
        self.t = 0.0

    def step(self) -> float:
        if self.n == 0:
            u1, u2 = bdf1_step_ternary(self.u1_n, self.u2_n, self.p, self.plan,
                                       self.weighting, self.penalty_mode)
            tau_used = self.tau1
        else:
            rho = self.p.tau / self.tau1 if self.n == 1 else 1.0
            u1, u2 = bdf2_step_ternary(self.u1_n, self.u1_nm1, self.u2_n, self.u2_nm1,
                                       self.p, self.plan, rho,
                                       self.weighting, self.penalty_mode)
            tau_used = self.p.tau
        g = u1.grid
        residual = (norm_inf(SphereField(g, u1.values - self.u1_n.values))
                    + norm_inf(SphereField(g, u2.values - self.u2_n.values))) / tau_used
        self.u1_nm1, self.u1_n = self.u1_n, u1
        self.u2_nm1, self.u2_n = self.u2_n, u2
        self.n += 1
        self.t += tau_used
        return residual

    def fields(self):
        return (self.u1_n, self.u2_n)

    def energy(self) -> float:
        return energy_ternary(self.u1_n, self.u2_n, self.p, self.plan, self.weighting)

    def modified_energy(self, inv_norm_bound: float = INV_NORM_BOUND) -> float:
        p1 = self.u1_nm1 if self.u1_nm1 is not None else self.u1_n
        p2 = self.u2_nm1 if self.u2_nm1 is not None else self.u2_n
        return energy_modified_ternary(self.u1_n, p1, self.u2_n, p2, self.p,
                                       self.plan, inv_norm_bound, self.weighting)

    def bmc_defect(self) -> float:
        return max(bmc_defect(self.u1_n), bmc_defect(self.u2_n))


def make_stepper(init, p, plan, weighting="spherical", penalty_mode="implicit"):
    if isinstance(p, BinaryParams):
        if not isinstance(init, SphereField):
            raise TypeError("binary run expects a single SphereField initial state")
        return BinaryStepper(init, p, plan, weighting, penalty_mode)
    if isinstance(p, TernaryParams):
        u1, u2 = init
        return TernaryStepper(u1, u2, p, plan, weighting, penalty_mode)
    raise TypeError(f"unsupported parameter type {type(p).__name__}")


def run_to_equilibrium(init, p, plan: SolverPlan, stop: StopCriterion | None = None,
                       weighting: str = "spherical", penalty_mode: str = "implicit",
                       record_every: int = 1, snapshot_times=(), on_snapshot=None,
                       inv_norm_bound: float = INV_NORM_BOUND):
    """Iterate to the residual criterion or a cap; returns (stepper, report).

    Records (step, time, energy, modified energy, residual) every
    record_every steps plus the final step; snapshots fire the first time
    the trajectory passes each scheduled time, calling
    on_snapshot(index, stepper) if given.
    """
    stop = stop or StopCriterion()
    stepper = make_stepper(init, p, plan, weighting, penalty_mode)
    report = RunReport()
    schedule = sorted(snapshot_times)
    next_snap = 0
    started = _time.perf_counter()

    def record(residual):
        report.rows.append(TraceRow(stepper.n, stepper.t, stepper.energy(),
                                    stepper.modified_energy(inv_norm_bound), residual))

    termination = "step_cap"
    residual = np.inf
    while stepper.n < stop.max_steps:
        try:
            residual = stepper.step()
        except DivergenceError:
            termination = "diverged"
            break
        if stepper.n % record_every == 0 or stepper.n == 1:
            record(residual)
        while next_snap < len(schedule) and stepper.t >= schedule[next_snap]:
            report.snapshots.append({"index": next_snap, "step": stepper.n,
                                     "time": stepper.t})
            if on_snapshot is not None:
                on_snapshot(next_snap, stepper)
            next_snap += 1
        if stepper.n >= 2 and residual <= stop.tol:
            termination = "converged"
            break
        if stepper.t >= stop.max_time:
            termination = "time_cap"
            break
    if not report.rows or report.rows[-1].step != stepper.n:
        if termination != "diverged":
            record(residual)
    report.termination = termination
    report.steps = stepper.n
    report.final_time = stepper.t
    report.wall_time = _time.perf_counter() - started
    return stepper, report
