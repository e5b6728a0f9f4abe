"""Spectral simulations of binary and ternary copolymer patterns on the sphere.

Double-Fourier-sphere spatial discretization, banded per-mode Helmholtz
solves, and stabilized semi-implicit two-step time integration of the
penalized Allen-Cahn flows of the Ohta-Kawasaki (binary) and Nakazawa-Ohta
(ternary) free energies on the unit sphere.
"""

from .dfs import (
    Grid,
    SphereField,
    SpectralCoeffs,
    analyze,
    bmc_defect,
    diff,
    extend_bmc,
    glide,
    inner_grid,
    inner_weighted,
    integrate_sphere,
    norm_grid,
    norm_inf,
    norm_weighted,
    restrict,
    spherical_laplacian,
    symmetrize_bmc,
    synthesize,
)
from .dynamics import (
    BinaryStepper,
    DivergenceError,
    RunReport,
    StopCriterion,
    TernaryStepper,
    bdf1_step_binary,
    bdf1_step_ternary,
    bdf2_step_binary,
    bdf2_step_ternary,
    run_to_equilibrium,
)
from .energetics import (
    BinaryParams,
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
from .experiments import (
    classify_assembly,
    convergence_harness,
    count_bubbles,
    fit_two_thirds,
    gamma12_sweep,
    gamma_sweep,
    init_circle,
    init_random_blocks,
    init_semi_random,
    init_two_circles,
    run_fixed_time,
)
from .helmholtz import (
    MeanViolationError,
    SolverError,
    SolverPlan,
    assemble_mode,
    estimate_inv_norm,
    inv_laplacian,
    inv_laplacian_meanfree,
    inv_norm_ratio,
    solve_helmholtz,
)

__version__ = "0.1.0"
