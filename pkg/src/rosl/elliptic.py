"""Systems of two 1D elliptic differential inclusions ``0 in Laplace(u) + f(x, u)``.

The domain is ``(0, 1)`` with homogeneous Dirichlet conditions.  Both solution
components are discretized by P1 finite elements on a uniform grid of ``N``
cells with a lumped mass matrix.  Grid vectors have ``2 (N - 1)`` coordinates:
the interior nodal values of ``u1`` followed by those of ``u2``.

One outer step projects zero onto ``Laplace(u_n) + N_f(u_n)`` in the dual of
the mixed ``W`` norm, ``||u||_W^2 = ||grad u||^2 - l_f ||u||^2``.  The
projection is the minimizer ``h*`` of

    I(h) = 1/2 ||h||_W^2 + (grad h, grad u_n) + sum_i w_i sigma(-h_i, f(x_i, u_n(x_i)))

and the iterate moves by ``u_{n+1} = u_n + h* / 2``.  The residual reported
at step ``n`` is ``||h*||_W``.
"""

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .convex import Ball, MinkowskiSum, Point, project, support, support_point
from .errors import DivergenceError, InnerSolverError, PreconditionError
from .gelfand import GelfandData, composite_constants, embedding_constant
from .hilbert import GramSpace
from .solver import SolveOptions, SolveReport, apriori_bounds, eta_sequence

__all__ = ["PointwiseMap", "BallPerturbedMap", "GelfandGrid", "PdiOptions", "build_grid",
           "builtin_rhs", "initial_data", "nemytskii_support", "selection", "dual_functional",
           "projection_step", "solve_pdi"]

_E2 = GramSpace.euclidean(2)


def _threads():
    try:
        n = int(os.environ.get("ROSL_SOLVE_THREADS", "0"))
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


@dataclass(frozen=True)
class PointwiseMap:
    """Pointwise right-hand side ``(x, s) -> f(x, s)``, a convex compact set in ``R^2``.

    Parameters
    ----------
    eval : callable
        ``eval(x, s) -> ConvexSet`` with ``x`` a float and ``s`` of shape (2,).
    l_f : float
        Uniform ROSL constant in ``s``.
    L_f : float, optional
        Uniform Lipschitz constant in ``s``; ``None`` if unknown or infinite.
    growth : tuple, optional
        ``(alpha, beta)`` with ``||f(x, s)|| <= alpha + beta |s|``.
    """

    eval: Callable
    l_f: float
    L_f: Optional[float] = None
    growth: Optional[tuple] = None
    name: str = "custom"

    # Generic node loops.  Node values are (2, n) arrays; evaluation is
    # independent across nodes and runs on a thread pool.
    def _map_nodes(self, fn, x, S, V):
        n = x.size

        def one(i):
            return fn(self.eval(float(x[i]), S[:, i].copy()), V[:, i])

        workers = min(_threads(), max(1, n // 64))
        if workers > 1:
            with ThreadPoolExecutor(workers) as ex:
                return list(ex.map(one, range(n)))
        return [one(i) for i in range(n)]

    def support_nodes(self, x, S, V):
        """``sigma(V_i, f(x_i, S_i))`` for every node, shape (n,)."""
        return np.array(self._map_nodes(lambda C, v: support(C, v, _E2), x, S, V))

    def argmax_nodes(self, x, S, V):
        """A maximizer of ``(V_i, .)`` over ``f(x_i, S_i)`` per node, shape (2, n)."""
        return np.array(self._map_nodes(lambda C, v: support_point(C, v, _E2), x, S, V)).T

    def project_nodes(self, x, S, Z):
        """Euclidean projection of ``Z_i`` onto ``f(x_i, S_i)`` per node, shape (2, n)."""
        return np.array(self._map_nodes(lambda C, z: project(C, z, _E2).point, x, S, Z)).T

    def is_singleton(self):
        return False


@dataclass(frozen=True)
class BallPerturbedMap(PointwiseMap):
    """``f(x, s) = g(x, s) + Ball(0, R)`` with vectorized node operations.

    ``g(x, S)`` takes node coordinates of shape (n,) and values of shape
    (2, n) and returns shape (2, n).
    """

    g: Callable = None
    R: float = 0.0

    def __post_init__(self):
        if self.R < 0:
            raise ValueError("R must be >= 0")
        if self.eval is None:
            object.__setattr__(self, "eval", self._eval_one)

    def _eval_one(self, x, s):
        gv = self.g(np.array([x]), np.asarray(s, dtype=float).reshape(2, 1))[:, 0]
        return MinkowskiSum(Point(gv), Ball(np.zeros(2), self.R))

    def support_nodes(self, x, S, V):
        return np.sum(V * self.g(x, S), axis=0) + self.R * np.sqrt(np.sum(V * V, axis=0))

    def argmax_nodes(self, x, S, V):
        nv = np.sqrt(np.sum(V * V, axis=0))
        scale = np.divide(self.R, nv, out=np.zeros_like(nv), where=nv > 0)
        return self.g(x, S) + V * scale

    def project_nodes(self, x, S, Z):
        c = self.g(x, S)
        q = Z - c
        nq = np.sqrt(np.sum(q * q, axis=0))
        s = np.minimum(1.0, np.divide(self.R, nq, out=np.ones_like(nq), where=nq > 0))
        return c + q * s

    def is_singleton(self):
        return self.R == 0.0


@dataclass(frozen=True)
class GelfandGrid:
    """Uniform P1 grid on ``(0, 1)`` for two components, with its Gram spaces."""

    N: int
    f: PointwiseMap
    nodes: np.ndarray
    K: GramSpace
    M: GramSpace
    gelfand: GelfandData

    @property
    def h(self):
        return 1.0 / self.N

    @property
    def n(self):
        """Interior nodes per component."""
        return self.N - 1

    @property
    def dim(self):
        return 2 * (self.N - 1)

    @property
    def W(self):
        return self.gelfand.W

    @property
    def weights(self):
        return np.full(self.n, self.h)

    def split(self, u):
        return np.asarray(u, dtype=float).reshape(2, self.n)

    def join(self, U):
        return np.asarray(U, dtype=float).reshape(-1)


def build_grid(N, f, lf=None):
    """Assemble stiffness, lumped mass and ``W`` Gram spaces on ``N`` cells.

    ``lf`` defaults to ``f.l_f`` and enters the ``W`` inner product as
    ``l_H``, with ``l_V = -1``.

    Raises
    ------
    ValueError
        If ``N < 4``.
    ConstraintError
        If ``lf`` is not below the first discrete Dirichlet eigenvalue.
    """
    if int(N) != N or N < 4:
        raise ValueError(f"N must be >= 4, got {N}")
    N = int(N)
    lf = f.l_f if lf is None else lf
    h = 1.0 / N
    n = N - 1
    kb = np.zeros((2, 2 * n))
    kb[1] = 2.0 / h
    kb[0, 1:] = -1.0 / h
    kb[0, n] = 0.0  # no coupling between the two components
    K = GramSpace.banded(kb)
    M = GramSpace.diagonal(np.full(2 * n, h))
    c = embedding_constant(K, M)
    data = GelfandData(K, M, lV=-1.0, lH=float(lf), cVH=c)
    return GelfandGrid(N=N, f=f, nodes=np.arange(1, N) * h, K=K, M=M, gelfand=data)


def _bsp1_g(lf):
    def g(x, S):
        s2 = np.sum(S * S, axis=0)
        return -(4.0 / 9.0) * (s2 / (1.0 + s2)) * S + lf * S
    return g


def _bsp2_g(x, S):
    p = -S[0] * S[1] + 1.0 + x
    return np.vstack([p - S[0], p - S[1]])


def builtin_rhs(name, lf=None, R=None):
    """The built-in right-hand sides ``bsp1`` and ``bsp2``.

    ``bsp1``: ``g(s) = -(4/9) |s|^2 / (1 + |s|^2) s + l_f s`` plus a ball of
    radius ``R`` (defaults ``l_f = -1``, ``R = 10``); ``L_f = 1/2 - l_f``.

    ``bsp2``: ``g(x, s) = (-s1 s2 + 1 - s1 + x, -s1 s2 + 1 - s2 + x)`` plus a
    ball of radius ``R`` (default 5).  The quadratic coupling has no global
    Lipschitz constant; ``l_f = -1`` is a heuristic choice for the ``W`` norm.
    """
    if name == "bsp1":
        lf = -1.0 if lf is None else float(lf)
        R = 10.0 if R is None else float(R)
        return BallPerturbedMap(eval=None, l_f=lf, L_f=0.5 - lf, growth=(R, 4.0 / 9.0 + abs(lf)),
                                name="bsp1", g=_bsp1_g(lf), R=R)
    if name == "bsp2":
        lf = -1.0 if lf is None else float(lf)
        R = 5.0 if R is None else float(R)
        return BallPerturbedMap(eval=None, l_f=lf, L_f=None, growth=None, name="bsp2", g=_bsp2_g, R=R)
    raise ValueError(f"unknown right-hand side {name!r} (expected 'bsp1' or 'bsp2')")


def initial_data(name, x):
    """Built-in initial data as an array of shape (2, n)."""
    x = np.asarray(x, dtype=float)
    if name == "bsp1":
        return np.vstack([0.5 * np.sin(2 * np.pi * x), 0.5 * np.sin(16 * np.pi * x)])
    if name == "bsp2":
        b = x * (1.0 - x)
        return np.vstack([b * np.exp(-(x - 0.1) ** 2 / 0.1), b * np.exp(-(x - 0.8) ** 2 / 0.01)])
    if name == "zero":
        return np.zeros((2, x.size))
    raise ValueError(f"unknown initial data {name!r}")


def nemytskii_support(grid, u, v):
    """``sum_i w_i sigma(v(x_i), f(x_i, u(x_i)))``: support of the lifted map in ``H``."""
    U, V = grid.split(grid.K.check(u)), grid.split(grid.K.check(v))
    return float(np.dot(grid.weights, grid.f.support_nodes(grid.nodes, U, V)))


def selection(grid, u, v):
    """Nodal selection ``h_v`` of ``N_f(u)`` attaining :func:`nemytskii_support` at ``v``."""
    U, V = grid.split(grid.K.check(u)), grid.split(grid.K.check(v))
    return grid.join(grid.f.argmax_nodes(grid.nodes, U, V))


def dual_functional(grid, u, h):
    """``I(h) = 1/2 h'G h + h'K u + sum_i w_i sigma(-h_i, f(x_i, u_i))`` with ``G`` the ``W`` Gram."""
    h = grid.W.check(h)
    return float(0.5 * h @ grid.W.apply(h) + h @ grid.K.apply(u) + nemytskii_support(grid, u, -h))


@dataclass(frozen=True)
class PdiOptions:
    """Options of :func:`projection_step` and :func:`solve_pdi`.

    Attributes
    ----------
    inner_tol : float
        Stop the inner solver once successive iterates are within
        ``inner_tol * (1 + ||h||_W)`` in the ``W`` norm.
    inner_max_iters : int
    outer : SolveOptions
        ``max_iters`` is the number of outer steps, ``tol_residual`` the
        outer stopping tolerance.
    allow_unjustified : bool
        Run even when the contraction hypothesis cannot be verified.
    divergence_window : int
        Raise after more than this many consecutive residual increases.
    """

    inner_tol: float = 1e-9
    inner_max_iters: int = 200_000
    outer: SolveOptions = field(default_factory=lambda: SolveOptions(max_iters=8, tol_residual=1e-6))
    allow_unjustified: bool = False
    divergence_window: int = 3

    def __post_init__(self):
        if not (self.inner_tol > 0 and self.inner_max_iters > 0):
            raise ValueError("inner tolerances must be positive")


def projection_step(grid, u, opts=None, history=None):
    """Minimize the dual functional ``I`` at ``u`` by FISTA with restarts.

    The smooth part ``1/2 h'G h + h'K u`` has gradient ``G h + K u`` and
    Lipschitz constant ``lambda_max(G)``; the step is its inverse.  The
    nonsmooth part is separable over nodes, and its prox with step ``t``
    at node ``i`` is ``z + tau Proj(-z / tau, C_i)`` with ``tau = w_i t``.
    Momentum is reset whenever ``I`` increases, and a plain prox-gradient
    step is taken instead, so accepted objective values never increase.
    The solver stops once successive iterates are within
    ``inner_tol * (1 + ||h||_W)`` and ``|I(h) + ||h||_W^2 / 2|`` is at most
    ``inner_tol * (1 + ||h||_W^2)``.

    Parameters
    ----------
    history : list, optional
        Receives the objective value of every accepted iterate.

    Returns
    -------
    h_star : ndarray
    residual : float
        ``||h_star||_W``.
    inner_iters : int

    Raises
    ------
    InnerSolverError
        After ``opts.inner_max_iters`` iterations; ``last`` holds the last
        objective decrease.
    """
    opts = opts or PdiOptions()
    W, f = grid.W, grid.f
    u = grid.K.check(u)
    U = grid.split(u)
    Ku = grid.K.apply(u)
    x, w = grid.nodes, grid.weights

    if f.is_singleton():
        # the nonsmooth term is linear: h* = -G^{-1}(K u - M g)
        c = grid.join(f.project_nodes(x, U, np.zeros_like(U)))
        hs = -W.solve(Ku - grid.M.apply(c))
        if history is not None:
            history.append(dual_functional(grid, u, hs))
        return hs, float(np.sqrt(max(hs @ W.apply(hs), 0.0))), 0

    t = 1.0 / W.eigmax
    tau = np.tile(w * t, 2).reshape(2, -1)

    def prox(z):
        Z = grid.split(z)
        return grid.join(Z + tau * f.project_nodes(x, U, -Z / tau))

    def objective(hh, Gh):
        H = grid.split(hh)
        return 0.5 * hh @ Gh + hh @ Ku + float(np.dot(w, f.support_nodes(x, U, -H)))

    hk = np.zeros(W.dim)
    Fk = 0.0
    y, tk = hk, 1.0
    if history is not None:
        history.append(Fk)
    dF = np.nan
    for k in range(1, opts.inner_max_iters + 1):
        hn = prox(y - t * (W.apply(y) + Ku))
        Gn = W.apply(hn)
        Fn = objective(hn, Gn)
        if Fn > Fk + 1e-14 * max(1.0, abs(Fk)) and tk > 1.0:
            tk = 1.0
            hn = prox(hk - t * (W.apply(hk) + Ku))
            Gn = W.apply(hn)
            Fn = objective(hn, Gn)
        tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        d = hn - hk
        y = hn + ((tk - 1.0) / tn) * d
        dW = np.sqrt(max(d @ W.apply(d), 0.0))
        dF = Fk - Fn
        hk, tk, Fk = hn, tn, Fn
        if history is not None:
            history.append(Fk)
        nh = np.sqrt(max(hk @ Gn, 0.0))
        # step-length test plus the duality relation I(h*) = -||h*||^2 / 2
        if dW < opts.inner_tol * (1.0 + nh) and abs(Fk + 0.5 * nh * nh) <= opts.inner_tol * (1.0 + nh * nh):
            return hk, float(nh), k
    raise InnerSolverError(f"inner solver did not converge in {opts.inner_max_iters} iterations",
                           last=float(dF), iterations=opts.inner_max_iters)


def _constants(grid, allow_unjustified):
    f = grid.f
    c = grid.gelfand.cVH
    if f.L_f is None:
        if not allow_unjustified:
            raise PreconditionError(
                f"right-hand side {f.name!r} has no Lipschitz constant; the contraction "
                "hypothesis cannot be checked (pass allow_unjustified to run anyway)")
        warnings.warn("running without a verified contraction factor", RuntimeWarning, stacklevel=3)
        return -1.0, np.nan, np.nan
    l, L, kappa, ok = composite_constants(-1.0, f.l_f, f.L_f, c)
    if not ok:
        if not allow_unjustified:
            raise PreconditionError(f"composite contraction factor kappa = {kappa:.6g} is not < 1")
        warnings.warn(f"kappa = {kappa:.6g} >= 1; running anyway", RuntimeWarning, stacklevel=3)
    return l, L, kappa


def solve_pdi(grid, u0, opts=None, callback=None):
    """Outer iteration ``u_{n+1} = u_n + h*(u_n) / 2`` from ``u0``.

    Parameters
    ----------
    grid : GelfandGrid
    u0 : array_like
        Flat grid vector or array of shape (2, n).
    opts : PdiOptions, optional
    callback : callable, optional
        ``callback(n, u_n, residual, inner_iters)`` after every projection.

    Returns
    -------
    SolveReport
        Residuals ``r_n = ||h*(u_n)||_W``; ``projection_iters`` holds the
        inner iteration counts and ``info`` the duality gaps and the
        implicit perturbation norms ``inner_tol (1 + ||u_n||_W)``.

    Raises
    ------
    PreconditionError
        If the contraction hypothesis fails and ``allow_unjustified`` is off.
    DivergenceError
        After more than ``opts.divergence_window`` consecutive increases.
    InnerSolverError
    """
    opts = opts or PdiOptions()
    l, L, kappa = _constants(grid, opts.allow_unjustified)
    W = grid.W
    u = grid.join(np.array(u0, dtype=float))
    W.check(u)
    outer = opts.outer
    residuals, inner_its, gaps, xi = [], [], [], []
    iterates = [u.copy()] if outer.record_iterates else None
    ups = 0
    converged = False
    loc = None
    report = None
    for n in range(outer.max_iters + 1):
        hs, r, its = projection_step(grid, u, opts)
        residuals.append(r)
        inner_its.append(its)
        gaps.append(abs(dual_functional(grid, u, hs) + 0.5 * r * r))
        xi.append(opts.inner_tol * (1.0 + float(np.sqrt(u @ W.apply(u)))))
        if loc is None:
            loc = Ball(u + 0.5 * hs, 0.5 * r, W)
        if callback is not None:
            callback(n, u, r, its)
        ups = ups + 1 if n > 0 and r > residuals[-2] else 0
        if ups > opts.divergence_window:
            report = _report(u, residuals, l, L, kappa, xi, loc, False, iterates, inner_its, gaps, grid)
            raise DivergenceError(f"residual increased in {ups} consecutive steps", report)
        if r <= outer.tol_residual:
            converged = True
            break
        if n == outer.max_iters:
            break
        u = u + 0.5 * hs
        if iterates is not None:
            iterates.append(u.copy())
    return _report(u, residuals, l, L, kappa, xi, loc, converged, iterates, inner_its, gaps, grid)


def _report(u, residuals, l, L, kappa, xi, loc, converged, iterates, inner_its, gaps, grid):
    m = len(residuals) - 1
    if np.isfinite(kappa) and kappa < 1:
        eta = eta_sequence(kappa, xi, m).tolist()
        dset = [apriori_bounds(residuals[0], l, L, xi, k)[1] for k in range(m + 1)]
        dpoint = apriori_bounds(residuals[0], l, L, xi, 0)[2]
    else:
        eta = [np.nan] * (m + 1)
        dset = [np.nan] * (m + 1)
        dpoint = np.nan
    return SolveReport(solution=u, residuals=residuals, kappa=kappa, l=l, L=L, eta=eta,
                       dist_set_bounds=dset, dist_point_bound=dpoint, localization=loc,
                       converged=converged, iterates=iterates, projection_iters=inner_its,
                       info={"duality_gap": gaps, "xi_norms": xi, "N": grid.N, "cVH": grid.gelfand.cVH})
