"""Initial conditions, pattern diagnostics, and experiment harnesses.

Indicator-type initial data is built on the native grid and doubled; pole
rows are overridden with the (phi-independent) value at the pole point so
the doubled field is exactly glide-symmetric while staying {0, 1}-valued.
Bubble counting runs on the native grid with phi wraparound and
single-point pole rows; per-bubble areas use the native quadrature weights.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .dfs import Grid, SphereField, extend_bmc, norm_grid, restrict, symmetrize_bmc
from .dynamics import StopCriterion, make_stepper, run_to_equilibrium, DivergenceError
from .energetics import BinaryParams, TernaryParams
from .helmholtz import SolverPlan

__all__ = [
    "BubbleReport",
    "PowerFit",
    "ConvergenceResult",
    "SweepRow",
    "AssemblyClassification",
    "default_epsilon",
    "PAPER_EPSILON",
    "init_circle",
    "init_two_circles",
    "init_random_blocks",
    "init_semi_random",
    "count_bubbles",
    "bubble_centroids",
    "fit_two_thirds",
    "run_fixed_time",
    "convergence_harness",
    "gamma_sweep",
    "classify_assembly",
    "gamma12_sweep",
]

# interface width used in the reference experiments: 10 * (2*pi/256)
PAPER_EPSILON = 10.0 * 2.0 * np.pi / 256.0


def default_epsilon(grid: Grid) -> float:
    """10h rule tied to the grid actually in use."""
    return 10.0 * grid.h_theta


# ---- initial conditions -------------------------------------------------------


def _native_coords(grid: Grid):
    phi, theta = grid.native_nodes()
    return np.meshgrid(phi, theta, indexing="ij")


def _disk_mask(grid: Grid, phi0, theta0, radius):
    """Coordinate disk on the native grid; pole rows take the pole-point value."""
    P, T = _native_coords(grid)
    mask = (P - phi0) ** 2 + (T - theta0) ** 2 < radius ** 2
    mask[:, 0] = theta0 ** 2 < radius ** 2
    mask[:, -1] = (np.pi - theta0) ** 2 < radius ** 2
    return mask


def _field_from_native(grid: Grid, native) -> SphereField:
    return extend_bmc(grid, np.asarray(native, dtype=float))


def init_circle(grid: Grid, omega: float, seed: int, radius_pad: float = 0.2) -> SphereField:
    """Indicator of one coordinate disk, radius sqrt(2*pi*omega) + pad,
    center uniform over the native rectangle."""
    if not 0.0 < omega < 1.0:
        raise ValueError("omega must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    phi0 = rng.uniform(-np.pi, np.pi)
    theta0 = rng.uniform(0.0, np.pi)
    r0 = np.sqrt(2.0 * np.pi * omega) + radius_pad
    return _field_from_native(grid, _disk_mask(grid, phi0, theta0, r0))


def init_two_circles(grid: Grid, omega1: float, omega2: float, seed: int,
                     radius_pad: float = 0.1):
    """One random coordinate disk per species; the second is truncated where
    the first already occupies the grid."""
    rng = np.random.default_rng(seed)
    masks = []
    for omega in (omega1, omega2):
        phi0 = rng.uniform(-np.pi, np.pi)
        theta0 = rng.uniform(0.0, np.pi)
        r = np.sqrt(2.0 * np.pi * omega) + radius_pad
        masks.append(_disk_mask(grid, phi0, theta0, r))
    m1 = masks[0]
    m2 = masks[1] & ~m1
    return _field_from_native(grid, m1), _field_from_native(grid, m2)


def init_random_blocks(grid: Grid, ratio: int, seed: int) -> SphereField:
    """Piecewise-constant uniform[0,1] noise on ratio x ratio native blocks,
    then glide-symmetrized."""
    n_phi, n_nat = grid.n_phi, grid.native_n_theta
    if ratio < 1 or n_phi % ratio or (grid.n_theta // 2) % ratio:
        raise ValueError(f"ratio {ratio} must divide n_phi and n_theta/2")
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(0.0, 1.0, (n_phi // ratio, grid.n_theta // (2 * ratio) + 1))
    native = np.repeat(np.repeat(coarse, ratio, axis=0), ratio, axis=1)[:, :n_nat]
    return symmetrize_bmc(_field_from_native(grid, native))


def init_semi_random(grid: Grid, omega1: float, omega2: float, seed: int,
                     patches: tuple[int, int] | None = None):
    """Random rectangular patches of the native domain, one random circle per
    patch assigned alternately to the two species; overlaps resolved by
    truncating the later-placed circle."""
    if omega1 + omega2 >= 1.0:
        raise ValueError("omega1 + omega2 must be < 1")
    rng = np.random.default_rng(seed)
    if patches is None:
        pr = int(rng.integers(2, 4))
        pc = int(rng.integers(2, 4))
    else:
        pr, pc = patches
    phi_edges = np.linspace(-np.pi, np.pi, pr + 1)
    th_edges = np.linspace(0.0, np.pi, pc + 1)
    n1 = np.zeros((grid.n_phi, grid.native_n_theta))
    n2 = np.zeros_like(n1)
    omegas = (omega1, omega2)
    idx = 0
    for a in range(pr):
        for b in range(pc):
            species = idx % 2
            idx += 1
            w = phi_edges[a + 1] - phi_edges[a]
            h = th_edges[b + 1] - th_edges[b]
            phi0 = rng.uniform(phi_edges[a] + 0.2 * w, phi_edges[a + 1] - 0.2 * w)
            theta0 = rng.uniform(th_edges[b] + 0.2 * h, th_edges[b + 1] - 0.2 * h)
            r_cap = 0.45 * min(w, h)
            r = min(np.sqrt(2.0 * np.pi * omegas[species]), r_cap) * rng.uniform(0.6, 1.0)
            mask = _disk_mask(grid, phi0, theta0, r)
            occupied = (n1 > 0.5) | (n2 > 0.5)
            target = n1 if species == 0 else n2
            target[mask & ~occupied] = 1.0
    return _field_from_native(grid, n1), _field_from_native(grid, n2)


# ---- bubble counting ----------------------------------------------------------


@dataclass
class BubbleReport:
    count: int
    areas: list
    threshold: float
    labels: np.ndarray  # native-grid labels, 0 = background


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def count_bubbles(u: SphereField, threshold: float = 0.5) -> BubbleReport:
    """Connected components of {u >= threshold} on the native grid.

    4-adjacency with phi wraparound; every above-threshold cell of a pole
    row belongs to one component (a pole row is a single point of the
    sphere), so near-polar cells connect through a pole exactly when the
    pole itself is above threshold.  Areas are native quadrature weights
    summed per component.
    """
    g = u.grid
    native = restrict(u)
    mask = native >= threshold
    labels, nlab = ndimage.label(mask)  # 4-adjacency, no wrap

    uf = _UnionFind(nlab + 1)
    # phi seam
    for a, b in zip(labels[0, :], labels[-1, :]):
        if a and b:
            uf.union(a, b)
    # pole rows are single points
    for row in (labels[:, 0], labels[:, -1]):
        present = np.unique(row[row > 0])
        for lab in present[1:]:
            uf.union(int(present[0]), int(lab))

    remap = {}
    out = np.zeros_like(labels)
    areas = {}
    cell_w = g.h_phi * g.native_theta_weights
    for lab in range(1, nlab + 1):
        root = uf.find(lab)
        if root not in remap:
            remap[root] = len(remap) + 1
    for lab in range(1, nlab + 1):
        out[labels == lab] = remap[uf.find(lab)]
    for new_lab in range(1, len(remap) + 1):
        sel = out == new_lab
        areas[new_lab] = float(np.sum(np.broadcast_to(cell_w, sel.shape)[sel]))
    return BubbleReport(len(remap), [areas[k] for k in sorted(areas)], threshold, out)


def bubble_centroids(u: SphereField, report: BubbleReport) -> np.ndarray:
    """Area-weighted unit-vector centroid of each bubble, shape (count, 3)."""
    g = u.grid
    phi, theta = g.native_nodes()
    P, T = np.meshgrid(phi, theta, indexing="ij")
    xyz = np.stack([np.cos(P) * np.sin(T), np.sin(P) * np.sin(T), np.cos(T)], axis=-1)
    w = np.broadcast_to(g.h_phi * g.native_theta_weights, P.shape)
    out = np.zeros((report.count, 3))
    for lab in range(1, report.count + 1):
        sel = report.labels == lab
        v = (xyz[sel] * w[sel][:, None]).sum(axis=0)
        nv = np.linalg.norm(v)
        out[lab - 1] = v / nv if nv > 0 else np.array([0.0, 0.0, 1.0])
    return out


# ---- fits ----------------------------------------------------------------------


@dataclass
class PowerFit:
    slope: float
    intercept: float
    r2: float


def fit_two_thirds(pairs) -> PowerFit:
    """Ordinary least squares on (log gamma, log count)."""
    pairs = list(pairs)
    if len(pairs) < 2:
        raise ValueError("need at least two (gamma, count) pairs")
    gam = np.array([p[0] for p in pairs], dtype=float)
    cnt = np.array([p[1] for p in pairs], dtype=float)
    if np.any(gam <= 0) or np.any(cnt <= 0):
        raise ValueError("gamma and count values must be positive")
    x, y = np.log(gam), np.log(cnt)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return PowerFit(float(slope), float(intercept), float(r2))


# ---- temporal convergence -------------------------------------------------------


def run_fixed_time(init, p, plan: SolverPlan, T: float,
                   weighting: str = "spherical", penalty_mode: str = "implicit"):
    """Advance to t ~= T (bootstrap step + round((T - tau1)/tau) BDF2 steps)
    without recording; returns the stepper."""
    stepper = make_stepper(init, p, plan, weighting, penalty_mode)
    stepper.step()
    n_bdf2 = int(round((T - stepper.tau1) / p.tau))
    for _ in range(n_bdf2):
        stepper.step()
    return stepper


@dataclass
class ConvergenceResult:
    taus: list
    errors: list
    rates: list
    bench_tau: float
    T: float


def _table1_params(system: str, epsilon: float):
    if system == "sok":
        return BinaryParams(epsilon=epsilon, omega=0.15, gamma=100.0,
                            M=1000.0, kappa=2000.0, beta=0.0, tau=1e-3)
    if system == "sno":
        return TernaryParams(epsilon=epsilon, omega1=0.09, omega2=0.09,
                             gamma11=100.0, gamma22=100.0, gamma12=0.0,
                             M1=1000.0, M2=1000.0, kappa1=2000.0, kappa2=2000.0,
                             tau=2e-4)
    raise ValueError(f"system must be 'sok' or 'sno', got {system!r}")


def convergence_harness(system: str, grid: Grid, tau_ladder, T: float, seed: int,
                        bench_tau: float = 1e-6, params=None, plan=None,
                        weighting: str = "spherical", penalty_mode: str = "implicit",
                        progress=None) -> ConvergenceResult:
    """Errors against a small-step benchmark from identical initial data,
    measured in the unweighted doubled-grid L2 norm (summed over species)."""
    tau_ladder = list(tau_ladder)
    if sorted(tau_ladder, reverse=True) != tau_ladder:
        raise ValueError("tau ladder must be descending")
    if tau_ladder and bench_tau >= tau_ladder[-1]:
        raise ValueError("benchmark tau must lie below the ladder")
    plan = plan or SolverPlan(grid)
    p = params or _table1_params(system, default_epsilon(grid))

    if system == "sok":
        init = init_circle(grid, p.omega, seed)
    else:
        init = init_two_circles(grid, p.omega1, p.omega2, seed)

    def final_fields(tau):
        stepper = run_fixed_time(init, replace(p, tau=tau), plan, T,
                                 weighting, penalty_mode)
        return stepper.fields()

    bench = final_fields(bench_tau)
    if progress:
        progress(f"benchmark tau={bench_tau:g} done")
    errors = []
    for tau in tau_ladder:
        fields = final_fields(tau)
        err = sum(norm_grid(SphereField(f.grid, f.values - b.values))
                  for f, b in zip(fields, bench))
        errors.append(float(err))
        if progress:
            progress(f"tau={tau:g}: L2h error {err:.6e}")
    rates = [float(np.log2(errors[i - 1] / errors[i])) for i in range(1, len(errors))]
    return ConvergenceResult(tau_ladder, errors, rates, bench_tau, T)


# ---- sweeps ---------------------------------------------------------------------


@dataclass
class SweepRow:
    gamma: float
    best_count: int
    best_energy: float
    runs: list  # per-seed dicts: seed, termination, energy, count


def _equilibrium_count(stepper, threshold):
    fields = stepper.fields()
    reports = [count_bubbles(f, threshold) for f in fields]
    return reports


def gamma_sweep(system: str, gamma_list, seeds_per_gamma: int, p_base,
                stop: StopCriterion, grid: Grid, plan=None, ratio: int = 16,
                threshold: float = 0.5, weighting: str = "spherical",
                penalty_mode: str = "implicit", record_every: int = 50,
                progress=None):
    """Best-of-seeds equilibria per repulsion strength.

    Every seed runs to the stopping criterion; the lowest-energy equilibrium
    is reported per gamma (failures are recorded and skipped).  For the
    ternary system gamma is applied to gamma11 = gamma22.
    """
    plan = plan or SolverPlan(grid)
    rows = []
    for gamma in gamma_list:
        runs = []
        best = None
        for seed in range(seeds_per_gamma):
            if system == "sok":
                p = replace(p_base, gamma=float(gamma))
                init = init_random_blocks(grid, ratio, seed)
            else:
                p = replace(p_base, gamma11=float(gamma), gamma22=float(gamma))
                init = init_semi_random(grid, p.omega1, p.omega2, seed)
            stepper, report = run_to_equilibrium(
                init, p, plan, stop, weighting, penalty_mode, record_every)
            entry = {"seed": seed, "termination": report.termination,
                     "steps": report.steps}
            if report.termination == "diverged":
                runs.append(entry)
                if progress:
                    progress(f"gamma={gamma} seed={seed}: diverged")
                continue
            energy = stepper.energy()
            reports = _equilibrium_count(stepper, threshold)
            count = reports[0].count
            entry.update(energy=energy, count=count,
                         counts=[r.count for r in reports])
            runs.append(entry)
            if progress:
                progress(f"gamma={gamma} seed={seed}: {report.termination} "
                         f"steps={report.steps} E={energy:.6f} count={count}")
            if best is None or energy < best[0]:
                best = (energy, count, stepper)
        if best is None:
            rows.append(SweepRow(float(gamma), -1, np.nan, runs))
        else:
            rows.append(SweepRow(float(gamma), best[1], best[0], runs))
    return rows


@dataclass
class AssemblyClassification:
    doubles: int
    singles1: int
    singles2: int
    separation: float  # mean geodesic distance to the nearest other-species bubble


def classify_assembly(u1: SphereField, u2: SphereField,
                      threshold: float = 0.5) -> AssemblyClassification:
    """Pair bubbles across species when their centroids are within one
    bubble diameter (mean of the two cap diameters)."""
    r1 = count_bubbles(u1, threshold)
    r2 = count_bubbles(u2, threshold)
    c1 = bubble_centroids(u1, r1)
    c2 = bubble_centroids(u2, r2)

    def cap_radius(area):
        # area of a geodesic cap of radius r is 2*pi*(1 - cos r)
        return float(np.arccos(np.clip(1.0 - area / (2.0 * np.pi), -1.0, 1.0)))

    rad1 = [cap_radius(a) for a in r1.areas]
    rad2 = [cap_radius(a) for a in r2.areas]
    if r1.count == 0 or r2.count == 0:
        return AssemblyClassification(0, r1.count, r2.count, float("inf"))

    dots = np.clip(c1 @ c2.T, -1.0, 1.0)
    dist = np.arccos(dots)
    cand = sorted(
        ((dist[i, j], i, j) for i in range(r1.count) for j in range(r2.count)),
        key=lambda t: t[0],
    )
    used1, used2 = set(), set()
    doubles = 0
    for d, i, j in cand:
        if i in used1 or j in used2:
            continue
        if d <= rad1[i] + rad2[j]:  # one mean diameter
            used1.add(i)
            used2.add(j)
            doubles += 1
    separation = float(np.mean(np.min(dist, axis=1)))
    return AssemblyClassification(doubles, r1.count - doubles, r2.count - doubles,
                                  separation)


def gamma12_sweep(gamma11: float, gamma12_list, p_base: TernaryParams,
                  stop: StopCriterion, grid: Grid, plan=None, seed: int = 0,
                  threshold: float = 0.5, weighting: str = "spherical",
                  penalty_mode: str = "implicit", record_every: int = 50,
                  progress=None):
    """Classify the equilibrium assembly across a ladder of cross repulsions."""
    plan = plan or SolverPlan(grid)
    out = []
    for g12 in gamma12_list:
        p = replace(p_base, gamma11=float(gamma11), gamma22=float(gamma11),
                    gamma12=float(g12))
        init = init_semi_random(grid, p.omega1, p.omega2, seed)
        stepper, report = run_to_equilibrium(init, p, plan, stop, weighting,
                                             penalty_mode, record_every)
        cls = None
        if report.termination != "diverged":
            cls = classify_assembly(*stepper.fields(), threshold=threshold)
        out.append({"gamma12": float(g12), "termination": report.termination,
                    "classification": cls})
        if progress:
            progress(f"gamma12={g12}: {report.termination} -> {cls}")
    return out
