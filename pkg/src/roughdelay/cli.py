"""Command line front end.

    roughdelay verify      --suite chen|sewing|covariance|chainrule|all
    roughdelay simulate    fBm path and delayed areas as CSV
    roughdelay solve       solve the delay equation on an fBm driver
    roughdelay convergence dyadic ladder against the smooth-driver oracle
    roughdelay itomap      response of the solution to perturbations

Settings come from built-in defaults, then ``--config FILE`` (JSON object
with the long flag names as keys, dashes or underscores), then explicit
flags.  Outputs go to ``--out``, else ``$ROUGHDELAY_OUT/<command>``, else
``./roughdelay-out/<command>``.  Exit status: 0 success, 1 threshold breach or
solver failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import io
from .controlled import t_sigma
from .fbm import DriverBundle, FbmSpec, fbm_driver
from .fields import MODELS, make_sigma
from .increments import Grid, GridPath
from .integral import empirical_order, riemann_convergence_study
from .levy import build_area
from .reference import dde_reference, smooth_path
from .solver import (DelayRDEProblem, SolverError, ito_map_experiment, past_path, solve_onestep,
                     solve_picard)
from .suites import SUITES, run_suite

DEFAULTS = {
    "suite": "all",
    "hurst": 0.45,
    "dim": 2,
    "n": 2,
    "delays": "1/4",
    "mesh": "1/256",
    "horizon": "1",
    "kappa": 0.4,
    "sigma_model": "sine",
    "seed": 42,
    "trials": 4096,
    "method": "cholesky",
    "mode": "onestep",
    "xi": "0.5",
    "levels": 4,
    "driver": "smooth",
    "eps": "0.1,0.01,0.001",
    "perturb": "both",
    "out": None,
}

SPREAD_LIMIT = 20.0


class UsageError(ValueError):
    pass


def _fraction(text) -> Fraction:
    try:
        return Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"not a rational number: {text!r}") from exc


def _fraction_list(text) -> list:
    text = str(text).strip()
    return [] if text in ("", "none") else [_fraction(p) for p in text.split(",")]


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with default settings")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--H", "--hurst", dest="hurst", type=float, help="Hurst parameter")
    p.add_argument("--mesh", help="grid step, exact rational such as 1/256")
    p.add_argument("--T", "--horizon", dest="horizon", help="time horizon (rational)")
    p.add_argument("--delays", help="comma-separated delays r_1<...<r_k (rationals)")
    p.add_argument("--trials", type=int)


def _add_model(p: argparse.ArgumentParser):
    p.add_argument("--sigma-model", dest="sigma_model", choices=MODELS)
    p.add_argument("--n", type=int, help="state dimension")
    p.add_argument("--d", "--dim", dest="dim", type=int, help="driver dimension")
    p.add_argument("--kappa", type=float)
    p.add_argument("--xi", help="constant initial path: one value or n comma-separated values")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roughdelay", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run verification suites")
    _add_common(p)
    p.add_argument("--suite", choices=SUITES + ("all",))

    p = sub.add_parser("simulate", help="sample an fBm driver and its delayed areas")
    _add_common(p)
    p.add_argument("--d", "--dim", dest="dim", type=int)
    p.add_argument("--method", choices=("cholesky", "circulant"))

    p = sub.add_parser("solve", help="solve the delay equation on an fBm driver")
    _add_common(p)
    _add_model(p)
    p.add_argument("--mode", choices=("onestep", "picard"))
    p.add_argument("--method", choices=("cholesky", "circulant"))

    p = sub.add_parser("convergence", help="dyadic convergence ladder")
    _add_common(p)
    _add_model(p)
    p.add_argument("--levels", type=int)
    p.add_argument("--driver", choices=("smooth", "fbm"))

    p = sub.add_parser("itomap", help="continuity of the solution map")
    _add_common(p)
    _add_model(p)
    p.add_argument("--eps", help="comma-separated perturbation sizes")
    p.add_argument("--perturb", choices=("both", "driver", "xi"))
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, then config file, then explicit flags."""
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
        for k, v in data.items():
            key = k.replace("-", "_")
            if key not in cfg:
                raise UsageError(f"unknown config key {k!r}")
            cfg[key] = v
    for k, v in vars(args).items():
        if k in ("config", "command") or v is None:
            continue
        cfg[k] = v
    cfg["command"] = args.command
    mesh = _fraction(cfg["mesh"])
    horizon = _fraction(cfg["horizon"])
    delays = _fraction_list(cfg["delays"])
    if mesh <= 0 or horizon <= 0:
        raise UsageError("mesh and horizon must be positive")
    for r in delays + [horizon]:
        if (r / mesh).denominator != 1:
            raise UsageError(f"mesh {mesh} does not divide {r}")
    if sorted(set(delays)) != delays or any(r <= 0 for r in delays):
        raise UsageError("delays must be positive and strictly increasing")
    if args.command in ("solve", "itomap", "convergence") and not cfg["kappa"] < cfg["hurst"]:
        raise UsageError("need kappa < H")
    cfg["_mesh"], cfg["_horizon"], cfg["_delays"] = mesh, horizon, delays
    return cfg


def echo(cfg: dict) -> dict:
    """The resolved config as it is written next to every output."""
    out = {k: v for k, v in cfg.items() if not k.startswith("_")}
    out["mesh"] = str(cfg["_mesh"])
    out["horizon"] = str(cfg["_horizon"])
    out["delays"] = ",".join(str(r) for r in cfg["_delays"])
    return out


def out_dir(cfg: dict) -> Path:
    if cfg.get("out"):
        return Path(cfg["out"])
    root = os.environ.get("ROUGHDELAY_OUT")
    return Path(root if root else "roughdelay-out") / cfg["command"]


def _grid(cfg) -> Grid:
    r_max = cfg["_delays"][-1] if cfg["_delays"] else Fraction(0)
    n_cells = int((cfg["_horizon"] + r_max) / cfg["_mesh"])
    return Grid.from_cells(-float(r_max), float(cfg["_mesh"]), n_cells)


def _xi_values(cfg, n: int) -> np.ndarray:
    vals = [float(v) for v in str(cfg["xi"]).split(",")]
    if len(vals) == 1:
        vals = vals * n
    if len(vals) != n:
        raise UsageError(f"xi needs 1 or {n} values")
    return np.asarray(vals)


def _xi(cfg, grid: Grid, n: int) -> GridPath:
    sub = grid.sub(0, grid.index(0.0))
    return GridPath(sub, np.tile(_xi_values(cfg, n), (sub.n_points, 1)))


def _problem(cfg, driver: DriverBundle) -> DelayRDEProblem:
    k = len(cfg["_delays"])
    n, d = int(cfg["n"]), int(cfg["dim"])
    try:
        sigma = make_sigma(cfg["sigma_model"], n, d, k, cfg["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return DelayRDEProblem(sigma, tuple(float(r) for r in cfg["_delays"]),
                           _xi(cfg, driver.path.grid, n), driver, float(cfg["_horizon"]),
                           cfg["kappa"], cfg["hurst"])


def _fbm_driver(cfg) -> DriverBundle:
    spec = FbmSpec(cfg["hurst"], int(cfg["dim"]), _grid(cfg), cfg["seed"], cfg["method"])
    return fbm_driver(spec, [float(r) for r in cfg["_delays"]])


def cmd_verify(cfg, dest: Path) -> int:
    checks = run_suite(cfg["suite"], cfg["hurst"], float(cfg["_mesh"]), cfg["seed"],
                       cfg["trials"], tuple(float(r) for r in cfg["_delays"]) or (0.25,),
                       float(cfg["_horizon"]))
    width = max(len(c.name) for c in checks)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.suite:<10} {c.name:<{width}}  "
              f"{c.value:.3e} <= {c.threshold:.1e}")
    io.write_csv(dest / "verify.csv", ["suite", "check", "value", "threshold", "passed"],
                 [[c.suite, c.name, c.value, c.threshold, str(c.passed)] for c in checks])
    return 0 if all(c.passed for c in checks) else 1


def cmd_simulate(cfg, dest: Path) -> int:
    drv = _fbm_driver(cfg)
    path, areas = drv.path, drv.areas
    d = path.values.shape[1]
    io.write_csv(dest / "path.csv", ["t"] + [f"comp_{a + 1}" for a in range(d)],
                 io.path_rows(path.times, path.values))
    rows = []
    for s in areas.shifts:
        c = areas.cell(s)
        v = -s * path.grid.mesh
        for k in range(s, c.shape[0]):
            for a in range(d):
                for b in range(d):
                    rows.append([k, v, a + 1, b + 1, c[k, a, b]])
    io.write_csv(dest / "areas.csv", ["k", "v", "a", "b", "value"], rows)
    (dest / "path.json").write_text(drv.spec.to_json() + "\n")
    (dest / "areas.json").write_text(areas.sidecar() + "\n")
    print(f"wrote {path.grid.n_points} points and {len(rows)} area entries to {dest}")
    return 0


def _write_solution(sol, dest: Path):
    n = sol.path.value.shape[1]
    d = sol.path.density.shape[2]
    header = ["t"] + [f"y_{l + 1}" for l in range(n)] + \
        [f"zeta_{l + 1}{a + 1}" for l in range(n) for a in range(d)]
    vals = np.concatenate([sol.path.value, sol.path.density.reshape(len(sol.times), -1)], axis=1)
    io.write_csv(dest / "solution.csv", header, io.path_rows(sol.times, vals))


def cmd_solve(cfg, dest: Path) -> int:
    problem = _problem(cfg, _fbm_driver(cfg))
    solve = solve_picard if cfg["mode"] == "picard" else solve_onestep
    sol = solve(problem)
    _write_solution(sol, dest)
    diag = {"mode": cfg["mode"], "windows": [w.as_dict() for w in sol.windows],
            "norm": None if sol.norms is None else {
                "kappa": sol.norms.kappa, "value_seminorm": sol.norms.value_seminorm,
                "remainder_seminorm": sol.norms.remainder_seminorm,
                "density_sup": sol.norms.density_sup,
                "density_seminorm": sol.norms.density_seminorm, "total": sol.norms.total}}
    io.write_json(dest / "diagnostics.json", diag)
    print(f"solved on {len(sol.times)} points; solution written to {dest / 'solution.csv'}")
    return 0


def _smooth_ladder(cfg):
    """Solver error against the delay-ODE oracle on meshes 2^-5 .. 2^-(4+levels)."""
    k = len(cfg["_delays"])
    n, d = int(cfg["n"]), 2
    sigma = make_sigma(cfg["sigma_model"], n, d, k, cfg["seed"])
    delays = [float(r) for r in cfg["_delays"]]
    T = float(cfg["_horizon"])
    xi_vals = _xi_values(cfg, n)
    step = 2.0 ** -12
    _, ref = dde_reference(sigma, delays, lambda t: xi_vals, T, step)
    rows = []
    for L in range(5, 5 + cfg["levels"]):
        h = 2.0 ** -L
        grid = Grid(-max(delays, default=0.0), T, h)
        x = smooth_path(grid)
        drv = DriverBundle(x, None, build_area(x, [0.0] + [-r for r in delays]))
        xi = GridPath(grid.sub(0, grid.index(0.0)), np.tile(xi_vals, (grid.index(0.0) + 1, 1)))
        prob = DelayRDEProblem(sigma, tuple(delays), xi, drv, T, cfg["kappa"])
        sol = solve_onestep(prob, norms=False)
        stride = int(round(h / step))
        rows.append((L - 5, h, float(np.max(np.abs(sol.path.value - ref[::stride])))))
    return rows


def cmd_convergence(cfg, dest: Path) -> int:
    if cfg["levels"] < 1:
        raise UsageError("levels must be at least 1")
    if cfg["driver"] == "smooth":
        rows = _smooth_ladder(cfg)
        header = ["level", "mesh", "error"]
        out = [list(r) for r in rows]
        ok = True
        if len(rows) > 1:
            header += ["ratio", "order"]
            for i, r in enumerate(out):
                ratio = np.nan if i == 0 else rows[i - 1][2] / r[2]
                order = np.nan if i == 0 else np.log2(ratio)
                r += [ratio, order]
            fit = empirical_order([r[1] for r in rows], [r[2] for r in rows])
            ok = fit >= 1.0
            print(f"empirical order {fit:.3f} (threshold 1)")
    else:
        problem = _problem(cfg, _fbm_driver(cfg))
        sol = solve_onestep(problem, norms=False)
        m = t_sigma(sol.path, past_path(sol, problem), problem.sigma, problem.shifts)
        span = 2 ** int(np.log2(m.n_points - 1))
        span = min(span, 2 ** cfg["levels"])
        ladder = riemann_convergence_study(m, problem.driver.areas, 0, span)
        header = ["level", "cells", "difference"]
        out = [[r.level, r.cells, r.difference] for r in ladder]
        diffs = [r.difference for r in ladder[1:]]
        ok = len(diffs) < 2 or diffs[-1] < diffs[0]
    io.write_csv(dest / "convergence.csv", header, out)
    for r in out:
        print("  ".join(io.fmt(v) for v in r))
    if not ok:
        print(f"threshold breach in row {out[-1]}", file=sys.stderr)
    return 0 if ok else 1


def cmd_itomap(cfg, dest: Path) -> int:
    problem = _problem(cfg, _fbm_driver(cfg))
    sizes = [float(e) for e in str(cfg["eps"]).split(",")]
    rows, spread = ito_map_experiment(problem, sizes, cfg["perturb"])
    out = [[r.eps, r.response, r.rhs, r.ratio] for r in rows]
    io.write_csv(dest / "itomap.csv", ["eps", "response", "rhs", "ratio"], out)
    for r in out:
        print("  ".join(io.fmt(v) for v in r))
    ok = not np.isfinite(spread) or spread <= SPREAD_LIMIT
    print(f"ratio spread {spread:.3f} (threshold {SPREAD_LIMIT:g})")
    return 0 if ok else 1


COMMANDS = {"verify": cmd_verify, "simulate": cmd_simulate, "solve": cmd_solve,
            "convergence": cmd_convergence, "itomap": cmd_itomap}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        dest = out_dir(cfg)
        dest.mkdir(parents=True, exist_ok=True)
        io.write_json(dest / "config.json", echo(cfg))
        return COMMANDS[args.command](cfg, dest)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"roughdelay: error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"roughdelay: solver failed: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"roughdelay: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
