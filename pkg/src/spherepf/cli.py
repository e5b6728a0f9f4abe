"""Config-driven run orchestration and file formats.

Config files are JSON with a strict schema: unknown keys are rejected by
name, defaults mirror the reference experiments (tau = 1e-3 binary /
2e-4 ternary, kappa = 2000, beta = 0, M = 1000, N = 256, epsilon null
meaning the reference width 10*(2*pi/256); the literal string "10h" ties
epsilon to the run grid instead).  Outputs: an energy CSV, raw float64
snapshots with JSON sidecars (native domain only), and PPM heatmaps.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dfs import Grid, SphereField, extend_bmc, restrict
from .dynamics import RunReport, StopCriterion, run_to_equilibrium
from .energetics import BinaryParams, TernaryParams
from .experiments import (
    PAPER_EPSILON,
    convergence_harness,
    count_bubbles,
    default_epsilon,
    gamma12_sweep,
    gamma_sweep,
    init_circle,
    init_random_blocks,
    init_semi_random,
    init_two_circles,
)
from .harmonics import eigenvalue, harmonic_basis
from .helmholtz import SolverPlan, inv_laplacian
from .dfs import norm_weighted

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "serialize_config",
    "write_energy_csv",
    "read_energy_csv",
    "write_snapshot",
    "read_snapshot",
    "render_heatmap",
    "render_three_views",
    "main",
]


class ConfigError(ValueError):
    pass


_COMMON_PARAM_DEFAULTS = {
    "epsilon": None,  # None -> PAPER_EPSILON; "10h" -> grid-tied
}

_SOK_PARAM_DEFAULTS = dict(
    _COMMON_PARAM_DEFAULTS,
    omega=0.15, gamma=None, M=1000.0, kappa=2000.0, beta=0.0,
    kappa_star=None, beta_star=0.0, tau=1e-3,
)
_SOK_REQUIRED = ("gamma",)

_SNO_PARAM_DEFAULTS = dict(
    _COMMON_PARAM_DEFAULTS,
    omega1=0.09, omega2=0.09, gamma11=None, gamma22=None, gamma12=0.0,
    M1=1000.0, M2=1000.0, kappa1=2000.0, kappa2=2000.0,
    beta1=0.0, beta2=0.0, kappa1_star=None, kappa2_star=None,
    beta1_star=0.0, beta2_star=0.0, tau=2e-4,
)
_SNO_REQUIRED = ("gamma11",)

_INIT_KINDS = ("random_blocks", "circle", "two_circles", "semi_random_patches", "file")
_INIT_DEFAULTS = {"kind": None, "ratio": 16, "patches": None, "path": None}
_STOP_DEFAULTS = {"tol": 1e-5, "max_steps": 2_000_000, "max_time": None}
_TOP_DEFAULTS = {
    "system": None,
    "grid": {"n_phi": 256, "n_theta": 256},
    "params": None,
    "init": None,
    "stop": None,
    "snapshots": [],
    "record_every": 10,
    "weighting": "spherical",
    "penalty_mode": "implicit",
    "out_dir": "run_out",
    "seed": 0,
}


def _merge_section(name, given, defaults, required=()):
    given = {} if given is None else dict(given)
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if key not in defaults:
            raise ConfigError(f"unknown key '{name}.{key}'")
        out[key] = value
    for key in required:
        if out.get(key) is None:
            raise ConfigError(f"missing required key '{name}.{key}'")
    return out


@dataclass
class RunConfig:
    system: str
    grid: dict
    params: dict
    init: dict
    stop: dict
    snapshots: list
    record_every: int
    weighting: str
    penalty_mode: str
    out_dir: str
    seed: int

    # ---- factories -----------------------------------------------------

    def make_grid(self) -> Grid:
        return Grid(int(self.grid["n_phi"]), int(self.grid["n_theta"]))

    def _epsilon(self, grid: Grid) -> float:
        eps = self.params.get("epsilon")
        if eps is None:
            return PAPER_EPSILON
        if eps == "10h":
            return default_epsilon(grid)
        return float(eps)

    def make_params(self, grid: Grid):
        p = dict(self.params)
        p["epsilon"] = self._epsilon(grid)
        if self.system == "sok":
            return BinaryParams(**p)
        return TernaryParams(**p)

    def make_init(self, grid: Grid, params):
        kind = self.init["kind"]
        seed = int(self.seed)
        if self.system == "sok":
            if kind == "random_blocks":
                return init_random_blocks(grid, int(self.init["ratio"]), seed)
            if kind == "circle":
                return init_circle(grid, params.omega, seed)
            if kind == "file":
                fields, _ = read_snapshot(self.init["path"])
                return extend_bmc(grid, fields[0])
            raise ConfigError(f"init kind '{kind}' is not valid for system 'sok'")
        if kind == "two_circles":
            return init_two_circles(grid, params.omega1, params.omega2, seed)
        if kind == "semi_random_patches":
            patches = self.init.get("patches")
            patches = tuple(patches) if patches else None
            return init_semi_random(grid, params.omega1, params.omega2, seed, patches)
        if kind == "file":
            fields, _ = read_snapshot(self.init["path"])
            return tuple(extend_bmc(grid, f) for f in fields[:2])
        raise ConfigError(f"init kind '{kind}' is not valid for system 'sno'")

    def make_stop(self) -> StopCriterion:
        max_time = self.stop["max_time"]
        return StopCriterion(
            tol=float(self.stop["tol"]),
            max_steps=int(self.stop["max_steps"]),
            max_time=np.inf if max_time is None else float(max_time),
        )

    def to_dict(self) -> dict:
        return asdict(self)


def _build_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    for key in data:
        if key not in _TOP_DEFAULTS:
            raise ConfigError(f"unknown key '{key}'")
    system = data.get("system")
    if system not in ("sok", "sno"):
        raise ConfigError("key 'system' must be 'sok' or 'sno'")

    grid = _merge_section("grid", data.get("grid"), _TOP_DEFAULTS["grid"])
    for k, v in grid.items():
        if int(v) <= 0 or int(v) % 2:
            raise ConfigError(f"'grid.{k}' must be a positive even integer")

    if system == "sok":
        params = _merge_section("params", data.get("params"),
                                _SOK_PARAM_DEFAULTS, _SOK_REQUIRED)
    else:
        params = _merge_section("params", data.get("params"),
                                _SNO_PARAM_DEFAULTS, _SNO_REQUIRED)
        if params["gamma22"] is None:
            params["gamma22"] = params["gamma11"]

    init_default_kind = "random_blocks" if system == "sok" else "semi_random_patches"
    init = _merge_section("init", data.get("init"), _INIT_DEFAULTS)
    if init["kind"] is None:
        init["kind"] = init_default_kind
    if init["kind"] not in _INIT_KINDS:
        raise ConfigError(f"'init.kind' must be one of {_INIT_KINDS}")
    if init["kind"] == "file" and not init.get("path"):
        raise ConfigError("missing required key 'init.path'")

    stop = _merge_section("stop", data.get("stop"), _STOP_DEFAULTS)
    weighting = data.get("weighting", _TOP_DEFAULTS["weighting"])
    if weighting not in ("spherical", "unweighted"):
        raise ConfigError("key 'weighting' must be 'spherical' or 'unweighted'")
    penalty_mode = data.get("penalty_mode", _TOP_DEFAULTS["penalty_mode"])
    if penalty_mode not in ("implicit", "extrapolated"):
        raise ConfigError("key 'penalty_mode' must be 'implicit' or 'extrapolated'")

    snapshots = list(data.get("snapshots", []))
    return RunConfig(
        system=system, grid=grid, params=params, init=init, stop=stop,
        snapshots=snapshots,
        record_every=int(data.get("record_every", _TOP_DEFAULTS["record_every"])),
        weighting=weighting, penalty_mode=penalty_mode,
        out_dir=str(data.get("out_dir", _TOP_DEFAULTS["out_dir"])),
        seed=int(data.get("seed", 0)),
    )


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return _build_config(data)


def serialize_config(cfg: RunConfig) -> str:
    """Canonical JSON form; load(serialize(load(x))) is a fixpoint."""
    return json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n"


# ---- outputs -----------------------------------------------------------------


def write_energy_csv(report: RunReport, path) -> None:
    lines = ["step,time,energy,modified_energy,residual"]
    for row in report.rows:
        lines.append(",".join([
            str(row.step), repr(row.time), repr(row.energy),
            repr(row.modified_energy), repr(row.residual),
        ]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_energy_csv(path):
    lines = Path(path).read_text().strip().splitlines()
    rows = []
    for line in lines[1:]:
        s, t, e, me, r = line.split(",")
        rows.append((int(s), float(t), float(e), float(me), float(r)))
    return rows


def write_snapshot(fields, meta: dict, path_base) -> None:
    """Raw little-endian float64 array (species, n_phi, native theta),
    row-major, plus a JSON sidecar."""
    base = Path(path_base)
    natives = [restrict(f) if isinstance(f, SphereField) else np.asarray(f)
               for f in fields]
    arr = np.stack(natives).astype("<f8")
    base.with_suffix(".bin").write_bytes(arr.tobytes())
    sidecar = {
        "species": arr.shape[0],
        "n_phi": arr.shape[1],
        "native_n_theta": arr.shape[2],
        "dtype": "<f8",
        "order": "C",
    }
    sidecar.update(meta)
    base.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n")


def read_snapshot(path_base):
    base = Path(path_base)
    meta = json.loads(base.with_suffix(".json").read_text())
    shape = (meta["species"], meta["n_phi"], meta["native_n_theta"])
    arr = np.frombuffer(base.with_suffix(".bin").read_bytes(), dtype="<f8").reshape(shape)
    return [arr[i].copy() for i in range(shape[0])], meta


# hard palette: background, species 1, species 2
_COLORS = {
    "background": (245, 245, 245),
    "species1": (196, 30, 58),
    "species2": (240, 200, 8),
}


def _write_ppm(path, rgb: np.ndarray) -> None:
    h, w, _ = rgb.shape
    header = f"P6\n{w} {h}\n255\n".encode()
    Path(path).write_bytes(header + rgb.astype(np.uint8).tobytes())


def read_ppm(path):
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM file")
    w, h = map(int, parts[1].split())
    data = parts[3][: w * h * 3]
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3)


def _colorize(natives, threshold=0.5):
    shape = natives[0].shape
    rgb = np.empty(shape + (3,), dtype=np.uint8)
    rgb[...] = _COLORS["background"]
    rgb[natives[0] >= threshold] = _COLORS["species1"]
    if len(natives) > 1:
        rgb[(natives[1] >= threshold) & (natives[0] < threshold)] = _COLORS["species2"]
    return rgb


def render_heatmap(fields, path, threshold: float = 0.5) -> None:
    """Equirectangular raster: rows are theta (north pole on top), columns phi."""
    natives = [restrict(f) if isinstance(f, SphereField) else np.asarray(f)
               for f in fields]
    rgb = _colorize(natives, threshold)
    _write_ppm(path, np.transpose(rgb, (1, 0, 2)))


def render_three_views(fields, grid: Grid, path_base, size: int = 320,
                       threshold: float = 0.5) -> list:
    """Orthographic front/side/top renders matching the figure layout."""
    natives = [restrict(f) if isinstance(f, SphereField) else np.asarray(f)
               for f in fields]
    rgb_nat = _colorize(natives, threshold)
    s = np.linspace(-1.05, 1.05, size)
    X, Y = np.meshgrid(s, -s, indexing="xy")  # image y axis points down
    inside = X ** 2 + Y ** 2 <= 1.0
    depth = np.sqrt(np.clip(1.0 - X ** 2 - Y ** 2, 0.0, 1.0))
    views = {
        "front": (depth, X, Y),   # viewer on +x
        "side": (-X, depth, Y),   # viewer on +y
        "top": (X, Y, depth),     # viewer on +z
    }
    written = []
    for name, (x, y, z) in views.items():
        phi = np.arctan2(y, x)
        theta = np.arccos(np.clip(z, -1.0, 1.0))
        i = np.mod(np.round((phi + np.pi) / grid.h_phi).astype(int), grid.n_phi)
        j = np.clip(np.round(theta / grid.h_theta).astype(int), 0,
                    grid.native_n_theta - 1)
        img = np.full((size, size, 3), 255, dtype=np.uint8)
        img[inside] = rgb_nat[i[inside], j[inside]]
        out = Path(f"{path_base}_{name}.ppm")
        _write_ppm(out, img)
        written.append(out)
    return written


# ---- subcommands ---------------------------------------------------------------


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.grid is not None:
        cfg.grid = {"n_phi": args.grid, "n_theta": args.grid}
    if args.tau is not None:
        cfg.params["tau"] = args.tau
    if args.out is not None:
        cfg.out_dir = args.out

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(serialize_config(cfg))

    grid = cfg.make_grid()
    params = cfg.make_params(grid)
    init = cfg.make_init(grid, params)
    plan = SolverPlan(grid)

    def on_snapshot(index, stepper):
        meta = {"time": stepper.t, "step": stepper.n, "system": cfg.system,
                "params": {k: v for k, v in cfg.params.items()}}
        write_snapshot(stepper.fields(), meta, out_dir / f"snapshot_{index:03d}")

    stepper, report = run_to_equilibrium(
        init, params, plan, cfg.make_stop(), cfg.weighting, cfg.penalty_mode,
        cfg.record_every, cfg.snapshots, on_snapshot)

    write_energy_csv(report, out_dir / "energy.csv")
    meta = {"time": stepper.t, "step": stepper.n, "system": cfg.system,
            "termination": report.termination,
            "params": {k: v for k, v in cfg.params.items()}}
    write_snapshot(stepper.fields(), meta, out_dir / "final")
    render_heatmap(stepper.fields(), out_dir / "final.ppm")
    render_three_views(stepper.fields(), grid, out_dir / "final")
    counts = [count_bubbles(f).count for f in stepper.fields()]
    print(f"termination={report.termination} steps={report.steps} "
          f"t={report.final_time:.6g} energy={report.rows[-1].energy:.8g} "
          f"bubbles={counts}")
    return 0


def _cmd_converge(args) -> int:
    grid = Grid(args.grid, args.grid)
    ladder = [float(x) for x in args.ladder.split(",")]
    result = convergence_harness(
        args.system, grid, ladder, args.T, args.seed,
        bench_tau=args.benchmark_tau,
        progress=(print if args.verbose else None))
    name = "||U - U_bench||_L2h" if args.system == "sok" else "sum_i ||U_i - U_i_bench||_L2h"
    print(f"{'tau':>12}  {name:>24}  {'rate':>8}")
    for i, (tau, err) in enumerate(zip(result.taus, result.errors)):
        rate = f"{result.rates[i - 1]:8.6f}" if i else "       -"
        print(f"{tau:12.4e}  {err:24.6e}  {rate}")
    print(f"{result.bench_tau:12.4e}  {'(benchmark)':>24}  {'-':>8}")
    return 0


def _default_base_params(system: str, gamma: float) -> BinaryParams | TernaryParams:
    if system == "sok":
        return BinaryParams(epsilon=PAPER_EPSILON, omega=0.15, gamma=gamma)
    return TernaryParams(epsilon=PAPER_EPSILON, omega1=0.09, omega2=0.09,
                         gamma11=gamma, gamma22=gamma, gamma12=0.0)


def _cmd_sweep_gamma(args) -> int:
    grid = Grid(args.grid, args.grid)
    gammas = [float(x) for x in args.gammas.split(",")]
    p_base = _default_base_params(args.system, gammas[0])
    if args.tau is not None:
        p_base.tau = args.tau
    stop = StopCriterion(tol=args.tol, max_steps=args.max_steps,
                         max_time=args.max_time)
    rows = gamma_sweep(args.system, gammas, args.seeds, p_base, stop, grid,
                       progress=(print if args.verbose else None))
    print(f"{'gamma':>10}  {'best_count':>10}  {'best_energy':>16}")
    payload = []
    for row in rows:
        print(f"{row.gamma:10.1f}  {row.best_count:10d}  {row.best_energy:16.8g}")
        payload.append({"gamma": row.gamma, "best_count": row.best_count,
                        "best_energy": row.best_energy, "runs": row.runs})
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    return 0


def _cmd_sweep_gamma12(args) -> int:
    grid = Grid(args.grid, args.grid)
    g12s = [float(x) for x in args.gamma12s.split(",")]
    p_base = _default_base_params("sno", args.gamma11)
    if args.tau is not None:
        p_base.tau = args.tau
    stop = StopCriterion(tol=args.tol, max_steps=args.max_steps,
                         max_time=args.max_time)
    results = gamma12_sweep(args.gamma11, g12s, p_base, stop, grid, seed=args.seed,
                            progress=(print if args.verbose else None))
    print(f"{'gamma12':>10}  {'doubles':>8}  {'singles1':>8}  {'singles2':>8}  {'separation':>10}")
    payload = []
    for res in results:
        cls = res["classification"]
        if cls is None:
            print(f"{res['gamma12']:10.1f}  {'(diverged)':>8}")
            payload.append({"gamma12": res["gamma12"], "termination": res["termination"]})
            continue
        print(f"{res['gamma12']:10.1f}  {cls.doubles:8d}  {cls.singles1:8d}  "
              f"{cls.singles2:8d}  {cls.separation:10.4f}")
        payload.append({"gamma12": res["gamma12"], "termination": res["termination"],
                        "doubles": cls.doubles, "singles1": cls.singles1,
                        "singles2": cls.singles2, "separation": cls.separation})
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    return 0


def _cmd_helmholtz_test(args) -> int:
    grid = Grid(args.grid, args.grid)
    plan = SolverPlan(grid)
    print(f"{'harmonic':>16}  {'rel_error':>12}")
    worst = 0.0
    for d, m, kind, f in harmonic_basis(grid, args.max_degree):
        u = inv_laplacian(plan, f)
        expect = SphereField(grid, f.values / eigenvalue(d))
        err = norm_weighted(SphereField(grid, u.values - expect.values)) / norm_weighted(expect)
        worst = max(worst, err)
        print(f"{f'(d={d}, m={m}, {kind})':>16}  {err:12.3e}")
    print(f"worst relative error: {worst:.3e}")
    return 0 if worst <= 1e-10 else 1


def _cmd_count_bubbles(args) -> int:
    natives, meta = read_snapshot(args.snapshot)
    grid = Grid(meta["n_phi"], 2 * (meta["native_n_theta"] - 1))
    for i, nat in enumerate(natives):
        field = extend_bmc(grid, nat)
        rep = count_bubbles(field, args.threshold)
        areas = ", ".join(f"{a:.4f}" for a in rep.areas)
        print(f"species {i + 1}: count={rep.count} areas=[{areas}]")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="spherepf",
        description="Spectral phase-field pattern formation on the unit sphere",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one configured trajectory")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--grid", type=int)
    run.add_argument("--tau", type=float)
    run.add_argument("--out")
    run.set_defaults(func=_cmd_run)

    conv = sub.add_parser("converge", help="temporal convergence table")
    conv.add_argument("--system", choices=("sok", "sno"), required=True)
    conv.add_argument("--grid", type=int, default=128)
    conv.add_argument("--ladder", default="5e-4,2.5e-4,1.25e-4,6.25e-5,3.125e-5")
    conv.add_argument("--T", type=float, default=0.01)
    conv.add_argument("--benchmark-tau", type=float, default=1e-6)
    conv.add_argument("--seed", type=int, default=0)
    conv.add_argument("--verbose", action="store_true")
    conv.set_defaults(func=_cmd_converge)

    sg = sub.add_parser("sweep-gamma", help="best-of-seeds equilibria per gamma")
    sg.add_argument("--system", choices=("sok", "sno"), required=True)
    sg.add_argument("--gammas", required=True)
    sg.add_argument("--seeds", type=int, default=5)
    sg.add_argument("--grid", type=int, default=128)
    sg.add_argument("--tau", type=float)
    sg.add_argument("--tol", type=float, default=1e-5)
    sg.add_argument("--max-steps", type=int, default=2_000_000)
    sg.add_argument("--max-time", type=float, default=np.inf)
    sg.add_argument("--out")
    sg.add_argument("--verbose", action="store_true")
    sg.set_defaults(func=_cmd_sweep_gamma)

    s12 = sub.add_parser("sweep-gamma12", help="cross-repulsion classification sweep")
    s12.add_argument("--gamma11", type=float, default=6000.0)
    s12.add_argument("--gamma12s", required=True)
    s12.add_argument("--grid", type=int, default=128)
    s12.add_argument("--seed", type=int, default=0)
    s12.add_argument("--tau", type=float)
    s12.add_argument("--tol", type=float, default=1e-5)
    s12.add_argument("--max-steps", type=int, default=2_000_000)
    s12.add_argument("--max-time", type=float, default=np.inf)
    s12.add_argument("--out")
    s12.add_argument("--verbose", action="store_true")
    s12.set_defaults(func=_cmd_sweep_gamma12)

    ht = sub.add_parser("helmholtz-test", help="eigenfunction residual table")
    ht.add_argument("--grid", type=int, default=32)
    ht.add_argument("--max-degree", type=int, default=4)
    ht.set_defaults(func=_cmd_helmholtz_test)

    cb = sub.add_parser("count-bubbles", help="count bubbles in a snapshot")
    cb.add_argument("--snapshot", required=True)
    cb.add_argument("--threshold", type=float, default=0.5)
    cb.set_defaults(func=_cmd_count_bubbles)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print("error: " + json.dumps({"type": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
