"""Command-line experiment runner.

``specpts run <experiment> [--config FILE] [--out DIR] [flags]``

Settings are merged in the order built-in defaults, ``--config`` JSON, then
command-line flags. Every run writes ``manifest.json`` into the output
directory, including failed ones. Exit codes: 0 success, 2 invalid
configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import platform
import sys
import traceback
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .geometry import Sphere, all_pair_distances_sq, random_config, triangular_config, unit_density_canvas
from .gradients import objective
from .graphkernel import WeightFunction
from .lattice import (SQUARE, TRIANGULAR, DoSHistogram, LatticeParams, dos, fundamental_domain_grid,
                      moment_L1, moment_W, operator_norm, sweep_argopt, sweep_fundamental_domain, van_hove_peak)
from .optimize import OptimizeSettings, bfgs_minimize, default_workers, multi_start
from .spectral import InvariantId, invariant

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
# anything the numerics raise once the configuration has validated
NUMERICAL_ERRORS = (np.linalg.LinAlgError, ArithmeticError, ValueError)

_POS_INT = {"type": "integer", "minimum": 1}
_NUM = {"type": "number"}
_POS_NUM = {"type": "number", "exclusiveMinimum": 0}
_STR = {"type": "string"}

_COMMON = {"experiment": _STR, "seed": {"type": "integer", "minimum": 0}, "out": _STR}
_OPT = {"restarts": _POS_INT, "max_iter": {"type": "integer", "minimum": 0}, "gtol": _POS_NUM}

# defaults and extra schema properties per experiment
EXPERIMENTS = {
    "sphere-simplex": (
        {"n": 4, "ambient_dim": None, "f": "exp:2", "objective": "trace", "sense": None, "restarts": 5,
         "max_iter": 2000, "gtol": 1e-8},
        {"n": {"type": "integer", "minimum": 3}, "ambient_dim": {"type": ["integer", "null"], "minimum": 2},
         "f": _STR, "objective": _STR, "sense": {"enum": ["minimize", "maximize", None]}, **_OPT},
    ),
    "torus-opt": (
        {"n": 100, "f": "exp:2", "objective": "trace", "sense": None, "restarts": 10, "max_iter": 2000,
         "gtol": 1e-8, "snapshot_stride": 0},
        {"n": {"type": "integer", "minimum": 2}, "f": _STR, "objective": _STR,
         "sense": {"enum": ["minimize", "maximize", None]}, "snapshot_stride": {"type": "integer", "minimum": 0},
         **_OPT},
    ),
    "lattice-sweep": (
        {"objective": "trace", "f": "exp:2", "N": 10, "grid": "41x41", "b_max": 1.7},
        {"objective": _STR, "f": _STR, "N": {"type": "integer", "minimum": 4, "multipleOf": 2},
         "grid": {"type": "string", "pattern": r"^[0-9]+x[0-9]+$"}, "b_max": _POS_NUM},
    ),
    "dos": (
        {"lattice": "triangular", "f": "exp:2", "M": 512, "bins": 200},
        {"lattice": _STR, "f": _STR, "M": {"type": "integer", "minimum": 2}, "bins": _POS_INT},
    ),
    "moments": (
        {"f": "exp:2", "M": 256},
        {"f": _STR, "M": {"type": "integer", "minimum": 2}},
    ),
    "interval": (
        {"center": 0.85, "width": 0.06, "f": "exp:2", "n": 100, "restarts": 10, "jitter": 1e-3,
         "max_iter": 2000, "gtol": 1e-8},
        {"center": _NUM, "width": _POS_NUM, "f": _STR, "n": {"type": "integer", "minimum": 16},
         "jitter": {"type": "number", "minimum": 0}, **_OPT},
    ),
    "trajectory": (
        {"objective": "rtot", "f": "exp:2", "n": 100, "max_iter": 400, "snapshot_stride": 10, "gtol": 1e-8},
        {"objective": _STR, "f": _STR, "n": {"type": "integer", "minimum": 2},
         "max_iter": {"type": "integer", "minimum": 0}, "snapshot_stride": _POS_INT, "gtol": _POS_NUM},
    ),
}


class ConfigError(ValueError):
    pass


def schema_for(experiment: str) -> dict:
    _, props = EXPERIMENTS[experiment]
    return {"type": "object", "properties": {**_COMMON, **props}, "additionalProperties": False}


def resolve_config(experiment: str, file_cfg: dict | None, flags: dict) -> dict:
    """Merge defaults, file settings and flags, then validate against the experiment schema."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    file_cfg = dict(file_cfg or {})
    if file_cfg.get("experiment", experiment) != experiment:
        raise ConfigError(f"config is for {file_cfg['experiment']!r}, not {experiment!r}")
    schema = schema_for(experiment)
    try:
        jsonschema.validate(file_cfg, schema)
    except jsonschema.ValidationError as err:
        raise ConfigError(f"config file: {err.message}") from None
    defaults, props = EXPERIMENTS[experiment]
    cfg = {"experiment": experiment, "seed": 0, **defaults, **file_cfg}
    for key, value in flags.items():
        if value is None:
            continue
        if key not in props and key not in _COMMON:
            raise ConfigError(f"--{key.replace('_', '-')} does not apply to {experiment}")
        cfg[key] = value
    cfg.pop("out", None)
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as err:
        raise ConfigError(err.message) from None
    _check_semantics(cfg)
    return cfg


def _check_semantics(cfg: dict) -> None:
    try:
        if "f" in cfg:
            WeightFunction.parse(cfg["f"])
        if "objective" in cfg:
            InvariantId.parse(cfg["objective"], cfg.get("sense"))
        if "lattice" in cfg:
            parse_lattice(cfg["lattice"])
        if "grid" in cfg:
            na, nb = parse_grid(cfg["grid"])
            if na < 2 or nb < 2:
                raise ValueError("grid needs at least 2 nodes per axis")
        if cfg["experiment"] == "interval":
            side = math.isqrt(cfg["n"])
            if side * side != cfg["n"] or side % 2:
                raise ValueError("interval needs n = side^2 with an even side")
    except ValueError as err:
        raise ConfigError(str(err)) from None


def parse_lattice(text: str) -> LatticeParams:
    named = {"square": SQUARE, "triangular": TRIANGULAR}
    if text in named:
        return named[text]
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise ValueError(f"lattice must be square, triangular or 'a,b', got {text!r}") from None
    return LatticeParams(a, b)


def parse_grid(text: str) -> tuple[int, int]:
    na, nb = text.lower().split("x")
    return int(na), int(nb)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------- emitters

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_rows(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def emit_contour(field, path) -> Path:
    """Write ``(a, b, value)`` rows; an empty field gives a header-only file."""
    return _write_rows(Path(path), ["a", "b", "value"], field)


def emit_dos(hist: DoSHistogram, path) -> Path:
    return _write_rows(Path(path), ["bin_center", "mass"], zip(hist.centers, hist.mass))


def emit_traj(snapshots, directory, run: int = 0) -> list[Path]:
    """One ``run{r}_iter{k}.json`` file per ``(iteration, config)`` snapshot."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for it, config in snapshots:
        p = directory / f"run{run}_iter{it}.json"
        p.write_text(config.dumps())
        paths.append(p)
    return paths


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------- experiments

def _settings(cfg: dict, **extra) -> OptimizeSettings:
    keys = ("max_iter", "gtol", "restarts", "seed", "snapshot_stride")
    kw = {k: cfg[k] for k in keys if k in cfg}
    return OptimizeSettings(workers=default_workers(), **{**kw, **extra})


def complete_graph_value(n: int, f: WeightFunction, inv: InvariantId) -> float:
    """Invariant of the regular simplex graph, where every edge has weight ``f(2n/(n-1))``."""
    w = float(f(2.0 * n / (n - 1)))
    if inv.matrix == "W":
        lam = np.array([-w] * (n - 1) + [w * (n - 1)])
    else:
        lam = np.array([0.0] + [n * w] * (n - 1))
    return invariant(np.sort(lam), inv, n)


def run_sphere_simplex(cfg, out: Path, log) -> list[Path]:
    n = cfg["n"]
    dim = cfg["ambient_dim"] if cfg["ambient_dim"] is not None else n - 1
    f = WeightFunction.parse(cfg["f"])
    inv = InvariantId.parse(cfg["objective"], cfg["sense"])
    best, _ = multi_start(Sphere(dim), n, f, inv, _settings(cfg))
    target = 2.0 * n / (n - 1)
    d2_err = float(np.abs(all_pair_distances_sq(best.config) - target).max())
    closed = complete_graph_value(n, f, inv)
    ok = d2_err < 1e-5 and abs(best.value - closed) < 1e-8
    log(f"max |d^2 - {target:.6g}| = {d2_err:.3e}; objective {best.value:.12g} vs complete graph {closed:.12g}")
    log("PASS" if ok else "FAIL")
    summary = {"max_d2_error": d2_err, "objective": best.value, "complete_graph_objective": closed,
               "iterations": best.iterations, "status": best.status, "pass": ok}
    (out / "best_config.json").write_text(best.config.dumps())
    return [_write_json(out / "summary.json", summary), out / "best_config.json"]


def _runs_table(path: Path, results) -> Path:
    rows = [(r, res.value, res.d_min if res.d_min is not None else math.nan, res.iterations)
            for r, res in enumerate(results)]
    return _write_rows(path, ["run", "value", "d_min", "iterations"], rows)


def run_torus_opt(cfg, out: Path, log) -> list[Path]:
    n = cfg["n"]
    f = WeightFunction.parse(cfg["f"])
    inv = InvariantId.parse(cfg["objective"], cfg["sense"])
    best, results = multi_start(unit_density_canvas(n), n, f, inv, _settings(cfg))
    log(f"best {inv} = {best.value:.12g}, d_min = {best.d_min:.3e} ({best.status})")
    paths = [_runs_table(out / "runs.csv", results)]
    (out / "best_config.json").write_text(best.config.dumps())
    paths.append(out / "best_config.json")
    for r, res in enumerate(results):
        paths += emit_traj(res.snapshots, out / "snapshots", r)
    paths.append(_write_json(out / "summary.json", {"objective": best.value, "d_min": best.d_min,
                                                     "best_run": results.index(best)}))
    return paths


def run_lattice_sweep(cfg, out: Path, log) -> list[Path]:
    f = WeightFunction.parse(cfg["f"])
    inv = InvariantId.parse(cfg["objective"])
    na, nb = parse_grid(cfg["grid"])
    grid = fundamental_domain_grid(na, nb, cfg["b_max"])
    field = sweep_fundamental_domain(inv, f, cfg["N"], grid, workers=default_workers())
    a, b, v = sweep_argopt(field, inv)
    log(f"optimum of {inv} at (a, b) = ({a:.6g}, {b:.6g}), value {v:.12g}")
    return [emit_contour(field, out / "sweep.csv"),
            _write_json(out / "summary.json", {"argopt": [a, b], "value": v})]


def run_dos(cfg, out: Path, log) -> list[Path]:
    f = WeightFunction.parse(cfg["f"])
    hist = dos(parse_lattice(cfg["lattice"]), f, cfg["M"], cfg["bins"])
    peak = van_hove_peak(hist)
    log(f"total mass {hist.total:.12g}; Van Hove peak near {peak:.4f}")
    return [emit_dos(hist, out / "dos.csv"),
            _write_json(out / "summary.json", {"total_mass": hist.total, "van_hove_peak": peak,
                                               "mean": hist.mean()})]


def run_moments(cfg, out: Path, log) -> list[Path]:
    f = WeightFunction.parse(cfg["f"])
    table = {}
    for name, p in (("square", SQUARE), ("triangular", TRIANGULAR)):
        row = {"operator_norm": operator_norm(p, f), "L1": moment_L1(p, f),
               "L1_quadrature": moment_L1(p, f, "quadrature", cfg["M"])}
        for k in (0, 1, 2):
            row[f"W{k}"] = moment_W(p, f, k)
            row[f"W{k}_quadrature"] = moment_W(p, f, k, "quadrature", cfg["M"])
        table[name] = row
        log(f"{name}: norm {row['operator_norm']:.8f}, M2 {row['W2']:.8f}, L1 {row['L1']:.8f}")
    return [_write_json(out / "moments.json", table)]


def run_interval(cfg, out: Path, log) -> list[Path]:
    f = WeightFunction.parse(cfg["f"])
    inv = InvariantId.interval_centered(cfg["center"], cfg["width"])
    side = math.isqrt(cfg["n"])
    tri = triangular_config(side)
    tri_value = objective(tri, f, inv)
    start = triangular_config(side, jitter=cfg["jitter"], seed=cfg["seed"])
    settings = _settings(cfg)
    from_tri = bfgs_minimize(start, f, inv, settings)
    best, results = multi_start(tri.manifold, cfg["n"], f, inv, settings)
    log(f"triangular {tri_value:.6g}; from triangular {from_tri.value:.6g}; best multi-start {best.value:.6g}")
    (out / "from_triangular.json").write_text(from_tri.config.dumps())
    (out / "best_config.json").write_text(best.config.dumps())
    summary = {"triangular": tri_value, "from_triangular": from_tri.value, "best": best.value,
               "relative_gain": 1.0 - best.value / tri_value}
    return [_write_json(out / "summary.json", summary), _runs_table(out / "runs.csv", results),
            out / "from_triangular.json", out / "best_config.json"]


def run_trajectory(cfg, out: Path, log) -> list[Path]:
    n = cfg["n"]
    f = WeightFunction.parse(cfg["f"])
    inv = InvariantId.parse(cfg["objective"])
    res = bfgs_minimize(random_config(unit_density_canvas(n), n, cfg["seed"]), f, inv, _settings(cfg))
    log(f"{inv} = {res.value:.12g} after {res.iterations} iterations ({res.status})")
    return emit_traj(res.snapshots, out / "trajectory", 0)


RUNNERS = {
    "sphere-simplex": run_sphere_simplex,
    "torus-opt": run_torus_opt,
    "lattice-sweep": run_lattice_sweep,
    "dos": run_dos,
    "moments": run_moments,
    "interval": run_interval,
    "trajectory": run_trajectory,
}


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specpts", description="Spectral pointset experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("experiment", choices=sorted(EXPERIMENTS))
    run.add_argument("--config", type=Path, help="JSON settings file")
    run.add_argument("--out", type=Path, default=None, help="output directory (default out/<experiment>)")
    run.add_argument("--seed", type=int)
    run.add_argument("--n", type=int)
    run.add_argument("--ambient-dim", type=int, help="sphere ambient dimension (default n - 1)")
    run.add_argument("--f", help="kernel, e.g. exp:2, oneminusexp:2, invpower:0.5, neglog")
    run.add_argument("--objective", help="invariant name, e.g. trace or interval(0.82,0.88)")
    run.add_argument("--sense", choices=["minimize", "maximize"])
    run.add_argument("--restarts", type=int)
    run.add_argument("--max-iter", type=int)
    run.add_argument("--gtol", type=float)
    run.add_argument("--snapshot-stride", type=int)
    run.add_argument("--N", type=int, dest="N")
    run.add_argument("--grid", help="AxB nodes over the fundamental domain, e.g. 41x41")
    run.add_argument("--b-max", type=float)
    run.add_argument("--lattice", help="square, triangular or 'a,b'")
    run.add_argument("--M", type=int, dest="M")
    run.add_argument("--bins", type=int)
    run.add_argument("--center", type=float)
    run.add_argument("--width", type=float)
    run.add_argument("--jitter", type=float)
    return parser


def _manifest(cfg, status, stage, code, outputs, error=None) -> dict:
    return {
        "experiment": cfg.get("experiment"),
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": cfg.get("seed"),
        "versions": {"specpts": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "status": status,
        "failure_stage": stage,
        "exit_code": code,
        "outputs": sorted(str(p.name) for p in outputs),
        "error": error,
    }


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "experiment", "config", "out")}
    out = args.out or Path("out") / args.experiment
    out.mkdir(parents=True, exist_ok=True)
    cfg = {"experiment": args.experiment, **{k: v for k, v in flags.items() if v is not None}}
    outputs: list[Path] = []
    stage, code, error = "validate", EXIT_OK, None
    try:
        file_cfg = None
        if args.config is not None:
            try:
                file_cfg = json.loads(args.config.read_text())
            except (OSError, json.JSONDecodeError) as err:
                raise ConfigError(f"cannot read {args.config}: {err}") from None
        cfg = resolve_config(args.experiment, file_cfg, flags)
        stage = "compute"
        outputs = RUNNERS[args.experiment](cfg, out, print)
        stage = None
    except ConfigError as err:
        code, error = EXIT_INVALID, str(err)
    except NUMERICAL_ERRORS as err:
        code, error = EXIT_NUMERICAL, f"{type(err).__name__}: {err}"
        traceback.print_exc()
    if error:
        print(f"error ({stage}): {error}", file=sys.stderr)
    status = "ok" if code == EXIT_OK else "failed"
    _write_json(out / "manifest.json", _manifest(cfg, status, stage, code, outputs, error))
    return code


if __name__ == "__main__":
    sys.exit(main())
