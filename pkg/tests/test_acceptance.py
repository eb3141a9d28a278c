"""Acceptance criteria; each test records one PASS/FAIL line in the terminal summary."""

import os
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_spd
from oracles import ellipsoid_dist, interval_dist, interval_inverse, qp_project
from rosl.convex import Ball, Hull, MinkowskiSum, Point, dual_functional, project
from rosl.elliptic import PdiOptions, build_grid, builtin_rhs, initial_data, nemytskii_support, solve_pdi
from rosl.gelfand import composite_constants
from rosl.hilbert import GramSpace, norm
from rosl.maps import SetValuedMap, verify_inverse_properties
from rosl.solver import SolveOptions, solve
from test_solver import affine_ball_map, random_instance

BSP1_REF = [17.506, 8.8020, 4.4425, 2.2531, 1.1496, 0.5899, 0.3040, 0.1571, 0.0815]
BSP2_REF = [0.6516, 0.3375, 0.1802, 0.1000, 0.0584, 0.0363, 0.0242, 0.0171, 0.0127]


def record(k, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def run_builtin(name, N=1024, steps=8, **kw):
    f = builtin_rhs(name, **kw)
    grid = build_grid(N, f)
    u0 = initial_data(name, grid.nodes)
    opts = PdiOptions(inner_tol=1e-9, outer=SolveOptions(max_iters=steps, tol_residual=1e-12),
                      allow_unjustified=name == "bsp2")
    t = time.perf_counter()
    rep = solve_pdi(grid, u0, opts)
    return rep, time.perf_counter() - t


@pytest.fixture(scope="module")
def bsp1():
    old = os.environ.get("ROSL_SOLVE_THREADS")
    os.environ["ROSL_SOLVE_THREADS"] = "1"
    try:
        return run_builtin("bsp1", lf=-1.0, R=10.0)
    finally:
        if old is None:
            del os.environ["ROSL_SOLVE_THREADS"]
        else:
            os.environ["ROSL_SOLVE_THREADS"] = old


def rel_errors(r, ref):
    return np.abs(np.asarray(r) - ref) / np.asarray(ref)


def test_1_bsp1_table(bsp1):
    rep, secs = bsp1
    err = rel_errors(rep.residuals, BSP1_REF)
    r512 = run_builtin("bsp1", N=512, steps=8)[0].residuals
    stable = bool(np.all(rel_errors(r512, rep.residuals) <= 5e-3))
    ok5 = bool(np.all(err <= 0.05))
    ok10 = bool(np.all(err <= 0.10))
    worst = int(np.argmax(err))
    detail = (f"residuals {np.array2string(np.asarray(rep.residuals), precision=5)}; "
              f"max rel err {err[worst]:.3f} at n={worst}; within 5%: {ok5}; 10% fallback: {ok10}; "
              f"grid-stable N=512 vs 1024: {stable}; runtime {secs:.1f} s")
    record(1, ok5 and stable and secs < 60, detail)


def test_2_bsp1_contraction(bsp1):
    rep, _ = bsp1
    r = np.asarray(rep.residuals)
    ratios = r[1:] / r[:-1]
    kappa_cf = composite_constants(-1.0, -1.0, 1.5, 1 / np.pi)[2]
    target = 0.5 + 3 / (4 * (np.pi ** 2 + 1))
    ok = bool(np.all(ratios <= 0.60)) and abs(kappa_cf - target) <= 1e-4 and abs(target - 0.5690) <= 1e-4
    record(2, ok, f"max ratio {ratios.max():.5f}; closed-form kappa {kappa_cf:.6f}; grid kappa {rep.kappa:.6f}")


def test_3_bsp2_table():
    with pytest.warns(RuntimeWarning):
        rep, secs = run_builtin("bsp2", R=5.0)
    r = np.asarray(rep.residuals)
    err = rel_errors(r, BSP2_REF)
    decreasing = bool(np.all(np.diff(r) < 0))
    ok = bool(np.all(err <= 0.10)) and decreasing
    record(3, ok, f"residuals {np.array2string(r, precision=5)}; max rel err {err.max():.3f}; "
                  f"strictly decreasing: {decreasing}; no divergence; runtime {secs:.1f} s")


def test_4_embedding_constant():
    c = build_grid(1024, builtin_rhs("bsp1")).gelfand.cVH
    err = abs(c * np.pi - 1)
    record(4, err <= 1e-3, f"cVH {c:.6f}, relative deviation from 1/pi {err:.2e}")


def test_5_solver_oracle():
    worst_in, worst_pt = 0.0, -np.inf
    for seed in range(20):
        A, r, ybar, x0 = random_instance(seed)
        F = affine_ball_map(A, r)
        rep = solve(F, ybar, x0, SolveOptions(tol_residual=1e-12, max_iters=1000))
        xbar = rep.solution
        worst_in = max(worst_in, ellipsoid_dist(xbar, A, ybar, r))
        bound = -rep.residuals[0] / (2 * rep.l + rep.L)
        worst_pt = max(worst_pt, np.linalg.norm(x0 - xbar) - bound)
    ok = worst_in <= 1e-8 and worst_pt <= 1e-8
    record(5, ok, f"max dist to inverse image {worst_in:.2e}; max excess over point bound {worst_pt:.2e}")


def test_6_inverse_properties():
    rng = np.random.default_rng(6)
    fails = 0
    E1 = GramSpace.euclidean(1)
    for _ in range(100):
        a, c, r = rng.uniform(-3, -0.2), rng.uniform(-2, 2), rng.uniform(0, 2)
        y, y2 = rng.uniform(-5, 5, 2)
        F = SetValuedMap(E1, lambda x, a=a, c=c, r=r: MinkowskiSum(Point(a * x), Ball([c], r)), l=a, L=-a)
        rep = verify_inverse_properties(F, [y], [y2], SolveOptions(tol_residual=1e-13, max_iters=300))
        lo, hi = interval_inverse(a, c, r, y)
        inside = interval_dist(rep.x[0], lo, hi) <= 1e-8
        fails += not (rep.ok and inside)
    record(6, fails == 0, f"100 trials, {fails} failures")


def test_7_dual_projection():
    worst, worst_dual = 0.0, 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        d = 1 + seed % 3
        G = random_spd(rng, d, cond=10.0)
        sp = GramSpace(G)
        kind = seed % 3
        V = rng.standard_normal((4, d))
        c = rng.standard_normal(d)
        R = rng.uniform(0.1, 1.0)
        if kind == 0:
            A, ref_kw = Ball(c, R, sp), dict(balls=[(c, R)])
        elif kind == 1:
            A, ref_kw = Hull(V), dict(vertices=V)
        else:
            A, ref_kw = MinkowskiSum(Hull(V), Ball(c, R, sp)), dict(vertices=V, balls=[(c, R)])
        x = 3 * rng.standard_normal(d)
        p = project(A, x, sp).point
        ref = qp_project(x, G, **ref_kw)
        worst = max(worst, norm(sp, p - ref))
        # h = p - x minimizes the dual functional with value -dist^2 / 2
        h = p - x
        dist2 = norm(sp, h) ** 2
        worst_dual = max(worst_dual, abs(dual_functional(A, x, h, sp) + 0.5 * dist2) / (1 + dist2))
    ok = worst <= 1e-7 and worst_dual <= 1e-7
    record(7, ok, f"50 instances, max metric error vs QP {worst:.2e}, max dual value error {worst_dual:.2e}")


def test_8_nemytskii_support():
    worst = 0.0
    rng = np.random.default_rng(8)
    for name in ("bsp1", "bsp2"):
        f = builtin_rhs(name)
        grid = build_grid(64, f)
        for _ in range(10):
            u, v = rng.standard_normal((2, grid.dim))
            V = grid.split(v)
            g = f.g(grid.nodes, grid.split(u))
            closed = grid.h * np.sum(V * g) + f.R * np.sum(grid.weights * np.linalg.norm(V, axis=0))
            val = nemytskii_support(grid, u, v)
            worst = max(worst, abs(val - closed) / abs(closed))
    record(8, worst <= 1e-12, f"max relative deviation {worst:.2e}")


def test_9_error_injection():
    worst = -np.inf
    for eps in (1e-3, 1e-1):
        for seed in range(20):
            A, r, ybar, x0 = random_instance(seed)
            d = A.shape[0]
            e = np.random.default_rng(seed + 7).standard_normal(d)
            e /= np.linalg.norm(e)
            xis = [eps * 2.0 ** -n * e for n in range(60)]
            rep = solve(affine_ball_map(A, r), ybar, x0,
                        SolveOptions(max_iters=40, tol_residual=1e-14, xi_schedule=xis, record_iterates=True))
            for x, bound in zip(rep.iterates, rep.dist_set_bounds):
                worst = max(worst, ellipsoid_dist(x, A, ybar, r) - bound)
    record(9, worst <= 1e-8, f"max excess of dist over bound {worst:.2e} (eps 1e-3 and 1e-1, 20 instances)")
