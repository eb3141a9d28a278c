"""Damped projection iteration for inclusions ``ybar in F(x)`` with ROSL ``F``.

With ``l < 0`` the ROSL constant and ``L`` the Lipschitz constant of ``F``,
the iteration

    v_n = ybar - Proj(ybar, F(x_n)),    x_{n+1} = x_n + v_n / (2 l) + xi_n

contracts the residual ``||v_n||`` by ``kappa = -L / (2 l)`` per step whenever
``kappa < 1``.  The perturbations ``xi_n`` model inexact steps.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .convex import Ball, project
from .errors import PreconditionError
from .hilbert import GramSpace, norm

__all__ = ["SolveOptions", "SolveReport", "solve", "localization_ball", "apriori_bounds",
           "eta_sequence", "solution_distance_lower_bound", "invert_modulus", "contraction_factor"]


@dataclass(frozen=True)
class SolveOptions:
    """Options of :func:`solve`.

    Attributes
    ----------
    max_iters : int
        Maximal number of updates.
    tol_residual : float
        Stop as soon as ``||v_n|| <= tol_residual``.
    xi_schedule : sequence of arrays, optional
        Injected perturbations ``xi_0, xi_1, ...``; zero beyond the schedule.
    record_iterates : bool
        Keep every ``x_n`` in the report.
    """

    max_iters: int = 200
    tol_residual: float = 1e-10
    xi_schedule: Optional[Sequence[np.ndarray]] = None
    record_iterates: bool = False

    def __post_init__(self):
        if not self.tol_residual > 0:
            raise ValueError("tol_residual must be > 0")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


@dataclass
class SolveReport:
    solution: np.ndarray
    residuals: list
    kappa: float
    l: float
    L: float
    eta: list
    dist_set_bounds: list
    dist_point_bound: float
    localization: Ball
    converged: bool
    iterates: Optional[list] = None
    projection_iters: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def iterations(self):
        return len(self.residuals) - 1


def contraction_factor(l, L):
    """``kappa = -L / (2 l)``; raises unless ``l < 0``, ``L >= 0`` and ``kappa < 1``."""
    if l is None or L is None:
        raise PreconditionError("both l and L must be declared (pass an estimate explicitly if needed)")
    if not l < 0:
        raise PreconditionError(f"the ROSL constant must be negative, got l = {l}")
    if L < 0:
        raise PreconditionError(f"the Lipschitz constant must be >= 0, got L = {L}")
    kappa = -L / (2.0 * l)
    if not kappa < 1.0:
        raise PreconditionError(f"contraction factor kappa = {kappa:.6g} is not < 1")
    return kappa


def localization_ball(xt, yt, ybar, l, space):
    """Ball guaranteed to contain a solution of ``ybar in F(x)``, given ``yt in F(xt)``.

    Center ``xt + (ybar - yt) / (2 l)``, radius ``-||ybar - yt|| / (2 l)``.
    """
    if not l < 0:
        raise PreconditionError(f"localization needs l < 0, got l = {l}")
    xt, yt, ybar = (space.check(np.atleast_1d(np.asarray(a, dtype=float))) for a in (xt, yt, ybar))
    d = ybar - yt
    return Ball(xt + d / (2.0 * l), -norm(space, d) / (2.0 * l), space)


def eta_sequence(kappa, xi_norms, n):
    """``eta_j = sum_{k=0}^{j} kappa^k ||xi_{j-k}||`` for ``j = 0..n``; missing entries are zero."""
    eta = np.zeros(n + 1)
    acc = 0.0
    for j in range(n + 1):
        acc = kappa * acc + (xi_norms[j] if j < len(xi_norms) else 0.0)
        eta[j] = acc
    return eta


def _eta_tail(kappa, xi_norms, n):
    # sum_{j >= n} eta_j with xi = 0 beyond the schedule
    S = len(xi_norms)
    if S == 0:
        return 0.0
    eta = eta_sequence(kappa, xi_norms, max(n, S - 1))
    head = float(np.sum(eta[n:S - 1])) if n < S - 1 else 0.0
    return head + kappa ** max(0, n - (S - 1)) * eta[S - 1] / (1.0 - kappa)


def apriori_bounds(v0_norm, l, L, xi_norms, n):
    """A-priori error bounds of the damped projection iteration at step ``n``.

    Returns
    -------
    eta_n : float
        ``sum_{k=0}^{n} kappa^k ||xi_{n-k}||``.
    dist_set_bound : float
        Bound on ``dist(x_n, F^{-1}(ybar))``: ``-kappa^{n-1} ||v_0|| / (2 l) + eta_{n-1}``
        for ``n >= 1``, and the localization bound ``-||v_0|| / l`` at ``n = 0``.
    dist_point_bound : float
        Bound on ``||x_n - xbar||`` for the limit ``xbar``:
        ``-kappa^n ||v_0|| / (2 l (1 - kappa)) + sum_{j >= n} eta_j``.
    """
    if v0_norm < 0 or n < 0:
        raise ValueError("v0_norm and n must be nonnegative")
    kappa = contraction_factor(l, L)
    xi_norms = [float(t) for t in xi_norms]
    eta = eta_sequence(kappa, xi_norms, n)
    if n == 0:
        dset = -v0_norm / l
    else:
        dset = -kappa ** (n - 1) * v0_norm / (2.0 * l) + eta[n - 1]
    dpoint = -kappa ** n * v0_norm / (2.0 * l * (1.0 - kappa)) + _eta_tail(kappa, xi_norms, n)
    return float(eta[n]), float(dset), float(dpoint)


def solve(F, ybar, x0, opts=None):
    """Run the damped projection iteration for ``ybar in F(x)`` from ``x0``.

    Parameters
    ----------
    F : SetValuedMap
        Map with declared ``l < 0`` and ``L`` such that ``-L / (2 l) < 1``.
    ybar, x0 : array_like
    opts : SolveOptions, optional

    Returns
    -------
    SolveReport

    Raises
    ------
    PreconditionError
        If a constant is missing or ``kappa >= 1``.
    ProjectionError
        If a projection onto ``F(x_n)`` fails to converge.
    """
    opts = opts or SolveOptions()
    sp = F.space
    l, L = F.l, F.L
    kappa = contraction_factor(l, L)
    ybar = sp.check(np.atleast_1d(np.asarray(ybar, dtype=float)))
    x = sp.check(np.atleast_1d(np.asarray(x0, dtype=float))).copy()
    xis = [sp.check(np.atleast_1d(np.asarray(s, dtype=float))) for s in (opts.xi_schedule or [])]
    xi_norms = [norm(sp, s) for s in xis]

    residuals, iterates, pits = [], [x.copy()] if opts.record_iterates else None, []
    loc = None
    converged = False
    for n in range(opts.max_iters + 1):
        pr = project(F(x), ybar, sp)
        v = ybar - pr.point
        r = norm(sp, v)
        residuals.append(r)
        pits.append(pr.iterations)
        if loc is None:
            loc = localization_ball(x, pr.point, ybar, l, sp)
        if r <= opts.tol_residual:
            converged = True
            break
        if n == opts.max_iters:
            break
        x = x + v / (2.0 * l)
        if n < len(xis):
            x = x + xis[n]
        if iterates is not None:
            iterates.append(x.copy())

    v0 = residuals[0]
    m = len(residuals) - 1
    eta = eta_sequence(kappa, xi_norms, m).tolist()
    dset = [apriori_bounds(v0, l, L, xi_norms, k)[1] for k in range(m + 1)]
    dpoint = apriori_bounds(v0, l, L, xi_norms, 0)[2]
    return SolveReport(solution=x, residuals=residuals, kappa=kappa, l=l, L=L, eta=eta,
                       dist_set_bounds=dset, dist_point_bound=dpoint, localization=loc,
                       converged=converged, iterates=iterates, projection_iters=pits)


def solution_distance_lower_bound(omega_inverse_min, dist_to_Fxt):
    """Lower bound on ``||x - xt||`` over solutions ``x`` near ``xt``.

    Bookkeeping for a modulus of continuity ``omega`` of ``F``: the caller
    supplies ``min omega^{-1}(dist(ybar, F(xt)))`` (see :func:`invert_modulus`),
    which is returned after validation.  A zero distance forces a zero bound.
    """
    if omega_inverse_min < 0 or dist_to_Fxt < 0:
        raise ValueError("inputs must be nonnegative")
    if dist_to_Fxt == 0:
        return 0.0
    return float(omega_inverse_min)


def invert_modulus(omega, value, hi=1.0, rtol=1e-13, max_doublings=200):
    """Smallest ``t >= 0`` with ``omega(t) >= value`` for nondecreasing ``omega``, by bisection."""
    if value < 0:
        raise ValueError("value must be nonnegative")
    if omega(0.0) >= value:
        return 0.0
    lo = 0.0
    for _ in range(max_doublings):
        if omega(hi) >= value:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise ValueError("modulus never reaches the requested value")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if omega(mid) >= value:
            hi = mid
        else:
            lo = mid
    return hi
