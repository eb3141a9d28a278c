"""Command-line driver: ``rosl run --experiment bsp1 --N 1024 --out results``.

Writes ``residuals.txt`` (step and residual, 5 significant digits),
``residuals.csv`` (per-step data) and ``iterates/step_<n>.csv`` to the output
directory.  Exit status: 0 when the requested steps complete, 2 when the
divergence detector fires, 1 on configuration or solver errors.  Errors are
reported on stderr with the prefix ``error:``.
"""

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from .convex import Ball, MinkowskiSum, Point
from .elliptic import PdiOptions, build_grid, builtin_rhs, initial_data, solve_pdi
from .errors import DivergenceError, RoslError
from .hilbert import GramSpace
from .maps import SetValuedMap
from .solver import SolveOptions, solve

log = logging.getLogger("rosl")

DEFAULTS = {
    "experiment": "bsp1",
    "N": 1024,
    "lf": None,
    "R": None,
    "u0": None,
    "steps": 8,
    "inner_tol": 1e-9,
    "inner_max_iters": 200_000,
    "outer_tol": None,
    "seed": 0,
    "out": "results",
    "allow_unjustified": False,
    # generic experiment: F(x) = A x + Ball(0, r), solve ybar in F(x) from x0
    "A": None,
    "r": 1.0,
    "ybar": None,
    "x0": None,
    "dim": 2,
}
EXPERIMENTS = ("bsp1", "bsp2", "generic")


class ConfigError(ValueError):
    pass


def load_config(path):
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = sorted(set(cfg) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return cfg


def validate(cfg):
    if cfg["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}")
    N = cfg["N"]
    if not isinstance(N, int) or isinstance(N, bool) or N < 4:
        raise ConfigError("N must be ≥ 4")
    if not isinstance(cfg["steps"], int) or cfg["steps"] < 0:
        raise ConfigError("steps must be a nonnegative integer")
    for key in ("inner_tol", "outer_tol"):
        if cfg[key] is not None and not cfg[key] > 0:
            raise ConfigError(f"{key} must be > 0")
    if cfg["R"] is not None and cfg["R"] < 0:
        raise ConfigError("R must be ≥ 0")
    if cfg["experiment"] == "bsp2" and not cfg["allow_unjustified"]:
        raise ConfigError("bsp2 has no verified contraction factor; pass --allow-unjustified")
    if cfg["experiment"] == "generic" and cfg["r"] < 0:
        raise ConfigError("r must be ≥ 0")
    return cfg


def resolve(args):
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(load_config(args.config))
    for key in ("experiment", "N", "lf", "R", "u0", "steps", "inner_tol", "outer_tol", "seed", "out"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    if args.allow_unjustified:
        cfg["allow_unjustified"] = True
    return validate(cfg)


def _fmt(v):
    return "" if v is None or not np.isfinite(v) else "%.17g" % v


def write_tables(out, residuals, inner_iters, eta, dset):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "residuals.txt", "w") as fh:
        fh.write(f"{'steps':>5}  {'residual':>12}\n")
        for n, r in enumerate(residuals):
            fh.write(f"{n:>5}  {'%#.5g' % r:>12}\n")
    with open(out / "residuals.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "residual", "ratio", "inner_iters", "eta_bound", "dist_set_bound"])
        for n, r in enumerate(residuals):
            ratio = r / residuals[n - 1] if n > 0 and residuals[n - 1] > 0 else None
            w.writerow([n, _fmt(r), _fmt(ratio), inner_iters[n], _fmt(eta[n]), _fmt(dset[n])])


def write_snapshot(out, n, columns, header):
    d = out / "iterates"
    d.mkdir(parents=True, exist_ok=True)
    np.savetxt(d / f"step_{n}.csv", np.column_stack(columns), delimiter=",", fmt="%.17g",
               header=",".join(header), comments="")


def load_u0(path, nodes):
    """Read ``x,u1,u2`` samples and interpolate them onto ``nodes`` (zero boundary values)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 3:
        raise ConfigError(f"{path}: expected columns x,u1,u2")
    x = np.concatenate([[0.0], data[:, 0], [1.0]])
    cols = [np.interp(nodes, x, np.concatenate([[0.0], data[:, k], [0.0]])) for k in (1, 2)]
    return np.vstack(cols)


def run_elliptic(cfg):
    out = Path(cfg["out"])
    name = cfg["experiment"]
    f = builtin_rhs(name, lf=cfg["lf"], R=cfg["R"])
    grid = build_grid(cfg["N"], f)
    u0src = cfg["u0"] or name
    if Path(u0src).suffix == ".csv" or Path(u0src).exists():
        U0 = load_u0(u0src, grid.nodes)
    else:
        U0 = initial_data(u0src, grid.nodes)
    outer = SolveOptions(max_iters=cfg["steps"], tol_residual=cfg["outer_tol"] or 1e-6)
    opts = PdiOptions(inner_tol=cfg["inner_tol"], inner_max_iters=cfg["inner_max_iters"], outer=outer,
                      allow_unjustified=cfg["allow_unjustified"])

    def snap(n, u, r, its):
        U = grid.split(u)
        write_snapshot(out, n, [grid.nodes, U[0], U[1]], ["x", "u1", "u2"])
        log.info("step %d  residual %.6g  inner iterations %d", n, r, its)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            rep = solve_pdi(grid, U0, opts, callback=snap)
        except DivergenceError as exc:
            rep = exc.report
            write_tables(out, rep.residuals, rep.projection_iters, rep.eta, rep.dist_set_bounds)
            raise
    write_tables(out, rep.residuals, rep.projection_iters, rep.eta, rep.dist_set_bounds)
    return rep


def run_generic(cfg):
    out = Path(cfg["out"])
    rng = np.random.default_rng(cfg["seed"])
    if cfg["A"] is None:
        d = int(cfg["dim"])
        Q = np.linalg.qr(rng.standard_normal((d, d)))[0]
        A = -(Q * rng.uniform(1.0, 3.0, d)) @ Q.T
    else:
        A = np.atleast_2d(np.asarray(cfg["A"], dtype=float))
        d = A.shape[0]
    A = 0.5 * (A + A.T)
    ev = np.linalg.eigvalsh(A)
    if ev[-1] >= 0:
        raise ConfigError("A must be symmetric negative definite")
    sp = GramSpace.euclidean(d)
    r = float(cfg["r"])
    F = SetValuedMap(sp, lambda x: MinkowskiSum(Point(A @ x), Ball(np.zeros(d), r)),
                     l=float(ev[-1]), L=float(-ev[0]))
    ybar = np.zeros(d) if cfg["ybar"] is None else np.asarray(cfg["ybar"], dtype=float)
    x0 = rng.standard_normal(d) * 10.0 if cfg["x0"] is None else np.asarray(cfg["x0"], dtype=float)
    rep = solve(F, ybar, x0, SolveOptions(max_iters=cfg["steps"], tol_residual=cfg["outer_tol"] or 1e-10,
                                          record_iterates=True))
    write_tables(out, rep.residuals, rep.projection_iters, rep.eta, rep.dist_set_bounds)
    for n, x in enumerate(rep.iterates):
        write_snapshot(out, n, [np.arange(d), x], ["i", "x"])
    return rep


def build_parser():
    p = argparse.ArgumentParser(prog="rosl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment")
    r.add_argument("--experiment", choices=EXPERIMENTS)
    r.add_argument("--N", type=int)
    r.add_argument("--lf", type=float)
    r.add_argument("--R", type=float)
    r.add_argument("--u0", help="builtin initial data name or CSV file with columns x,u1,u2")
    r.add_argument("--steps", type=int)
    r.add_argument("--inner-tol", dest="inner_tol", type=float)
    r.add_argument("--outer-tol", dest="outer_tol", type=float)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--config", help="JSON file; flags override its values")
    r.add_argument("--allow-unjustified", dest="allow_unjustified", action="store_true",
                   help="run without a verified contraction factor (required for bsp2)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve(args)
        Path(cfg["out"]).mkdir(parents=True, exist_ok=True)
        with open(Path(cfg["out"]) / "config.json", "w") as fh:
            json.dump(cfg, fh, indent=2, sort_keys=True)
        rep = run_generic(cfg) if cfg["experiment"] == "generic" else run_elliptic(cfg)
    except DivergenceError as exc:
        print(f"error: divergence detected: {exc}", file=sys.stderr)
        return 2
    except (RoslError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for n, r in enumerate(rep.residuals):
        print(f"{n:>5}  {'%#.5g' % r:>12}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
