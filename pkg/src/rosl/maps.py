"""Set-valued map oracles and sampled estimates of their ROSL and Lipschitz constants."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .convex import ConvexSet, excess_estimate, set_norm, support, diameter
from .errors import PreconditionError
from .hilbert import GramSpace, inner, norm

__all__ = ["SetValuedMap", "SamplePlan", "rosl_estimate", "lipschitz_estimate",
           "verify_inverse_properties", "InverseReport"]


@dataclass(frozen=True)
class SetValuedMap:
    """Oracle ``x -> F(x)`` returning convex sets, with optional declared constants.

    Parameters
    ----------
    space : GramSpace
        Domain space.  Unless ``codomain`` is given, values of the map are
        sets in the same space (the ``V = V*`` identification used by the
        damped projection iteration).
    func : callable
        ``func(x) -> ConvexSet``.  Must be pure.
    l : float, optional
        Declared ROSL constant.
    L : float, optional
        Declared Lipschitz constant (w.r.t. the excess).
    """

    space: GramSpace
    func: Callable[[np.ndarray], ConvexSet]
    l: Optional[float] = None
    L: Optional[float] = None
    codomain: Optional[GramSpace] = None

    def __post_init__(self):
        if self.L is not None and self.L < 0:
            raise ValueError("Lipschitz constant must be >= 0")

    @property
    def codomain_space(self):
        return self.codomain if self.codomain is not None else self.space

    def __call__(self, x):
        return self.func(self.space.check(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class SamplePlan:
    """Seeded list of point pairs ``(x, x')`` with ``x != x'``.

    Pairs are drawn uniformly in a box (``lower``/``upper``) or a Euclidean
    ball (``center``/``radius``).  Generation is sequential from one seeded
    stream, so a plan of ``count`` pairs is a prefix of any larger plan with
    the same seed and domain.
    """

    pairs: np.ndarray
    seed: int

    @property
    def count(self):
        return self.pairs.shape[0]

    @classmethod
    def in_box(cls, lower, upper, count=500, seed=0):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        rng = np.random.default_rng(seed)
        pairs = np.empty((count, 2, lower.size))
        for k in range(count):
            while True:
                a = lower + (upper - lower) * rng.random(lower.size)
                b = lower + (upper - lower) * rng.random(lower.size)
                if np.any(a != b):
                    break
            pairs[k, 0], pairs[k, 1] = a, b
        return cls(pairs=pairs, seed=seed)

    @classmethod
    def in_ball(cls, center, radius, count=500, seed=0):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        d = center.size
        rng = np.random.default_rng(seed)

        def draw():
            g = rng.standard_normal(d)
            g /= np.linalg.norm(g)
            return center + radius * rng.random() ** (1.0 / d) * g

        pairs = np.empty((count, 2, d))
        for k in range(count):
            while True:
                a, b = draw(), draw()
                if np.any(a != b):
                    break
            pairs[k, 0], pairs[k, 1] = a, b
        return cls(pairs=pairs, seed=seed)

    @classmethod
    def from_pairs(cls, pairs, seed=0):
        pairs = np.asarray(pairs, dtype=float)
        if pairs.ndim == 2:
            pairs = pairs[:, :, None]
        if np.any(np.all(pairs[:, 0] == pairs[:, 1], axis=-1)):
            raise ValueError("sample pairs need x != x'")
        return cls(pairs=pairs, seed=seed)


def _rosl_quotient(F, a, b):
    sp = F.space
    d = a - b
    return (support(F(a), d, sp) - support(F(b), d, sp)) / inner(sp, d, d)


def rosl_estimate(F, plan, polish=0):
    """Largest sampled ROSL quotient of ``F``.

    For a pair ``(x, x')`` with ``d = x - x'`` the ROSL inequality along the pair
    holds for all ``y`` in ``F(x)`` iff
    ``sigma(d, F(x)) - sigma(d, F(x')) <= l ||d||^2``.  Both orderings of each
    pair are evaluated.  The result is a lower bound on the best ROSL constant.

    Parameters
    ----------
    F : SetValuedMap
    plan : SamplePlan
    polish : int
        Rounds of compass search on ``x'`` around the best pair, halving the
        step after each unsuccessful round.  Every accepted value comes from
        an actual pair, so the estimate remains a lower bound.
    """
    best, arg = -np.inf, None
    for x, xp in plan.pairs:
        for a, b in ((x, xp), (xp, x)):
            q = _rosl_quotient(F, a, b)
            if q > best:
                best, arg = q, (a, b)
    if polish and arg is not None:
        a, b = arg
        step = 0.25 * np.linalg.norm(a - b)
        eye = np.eye(a.size)
        for _ in range(polish):
            improved = False
            for e in np.vstack([eye, -eye]):
                c = b + step * e
                if np.all(c == a):
                    continue
                q = _rosl_quotient(F, a, c)
                if q > best:
                    best, b, improved = q, c, True
            if not improved:
                step *= 0.5
    return float(best)


def lipschitz_estimate(F, plan, ndirs=64):
    """Largest sampled ``max(e(F(x), F(x')), e(F(x'), F(x))) / ||x - x'||``.

    Excesses are estimated with :func:`rosl.convex.excess_estimate` using
    ``ndirs`` directions, so the result is a lower estimate.
    """
    sp = F.space
    best = 0.0
    for x, xp in plan.pairs:
        A, B = F(x), F(xp)
        e = max(excess_estimate(A, B, sp, ndirs), excess_estimate(B, A, sp, ndirs))
        best = max(best, e / norm(sp, x - xp))
    return float(best)


@dataclass
class InverseReport:
    x: np.ndarray
    x2: np.ndarray
    lipschitz_ratio: float
    lipschitz_bound: float
    norm_x: float
    norm_bound: float
    rosl_residual: float
    """``(y2 - y, x2 - x) / ||y2 - y||^2``; nonpositive for a 0-ROSL inverse."""
    diameter_image: float = float("nan")
    diameter_bound: float = float("nan")
    passed: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(self.passed.values())


def verify_inverse_properties(F, y, y2, opts=None, x0=None, tol=1e-8):
    """Check the properties of the inverse ``F^{-1}`` at two targets.

    Solves ``y in F(x)`` from ``x0`` (default origin) and ``y2 in F(x2)`` from
    ``x``, then checks the Lipschitz ratio ``||x2 - x|| / ||y2 - y|| <= -1/l``,
    the norm bound ``||x|| <= -(1/l)(||F(0)|| + ||y||)``, the 0-ROSL inequality
    ``(y2 - y, x2 - x) <= 0`` and, when ``F(x)`` admits an exact diameter, the
    bound on the diameter of the inverse image ``diam F^{-1}(y) <= -(1/l) diam F(x)``
    evaluated at the solution (the image diameter is reported; the inverse
    diameter itself is left to callers with an analytic oracle).
    """
    from .solver import SolveOptions, solve

    if F.l is None or F.l >= 0:
        raise PreconditionError("inverse properties need a declared l < 0")
    sp = F.space
    opts = opts or SolveOptions()
    y = sp.check(np.atleast_1d(np.asarray(y, dtype=float)))
    y2 = sp.check(np.atleast_1d(np.asarray(y2, dtype=float)))
    x0 = np.zeros(sp.dim) if x0 is None else sp.check(np.asarray(x0, dtype=float))
    x = solve(F, y, x0, opts).solution
    x2 = solve(F, y2, x, opts).solution
    dy = norm(sp, y2 - y)
    inv_l = -1.0 / F.l
    ratio = norm(sp, x2 - x) / dy if dy > 0 else 0.0
    nx = norm(sp, x)
    nb = inv_l * (set_norm(F(np.zeros(sp.dim)), sp) + norm(sp, y))
    rr = inner(sp, y2 - y, x2 - x) / dy ** 2 if dy > 0 else 0.0
    dimg = diameter(F(x), sp)
    scale = 1.0 + nx
    return InverseReport(
        x=x, x2=x2, lipschitz_ratio=ratio, lipschitz_bound=inv_l, norm_x=nx, norm_bound=nb,
        rosl_residual=rr, diameter_image=dimg, diameter_bound=inv_l * dimg,
        passed={
            "lipschitz": ratio <= inv_l + tol,
            "norm_bound": nx <= nb + tol * scale,
            "zero_rosl": rr <= tol,
        },
    )
