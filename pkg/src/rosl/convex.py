"""Closed bounded convex sets described by support and projection capabilities.

Every set lives in coordinates of ``R^d``.  Queries take the :class:`GramSpace`
whose inner product defines both the pairing in the support function and the
metric of the projection.  Internally, supports are evaluated against the
functional ``w = G v``, which makes them exact for any Gram matrix.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc
from scipy.special import ndtri

from .errors import DimensionError, MetricMismatchError, ProjectionError
from .hilbert import GramSpace, inner, norm

__all__ = [
    "ConvexSet", "Point", "Ball", "Box", "Hull", "MinkowskiSum", "ProjectionResult",
    "support", "support_point", "project", "prox_support", "dual_functional",
    "excess_estimate", "set_norm", "diameter", "sphere_directions",
]

PROJ_TOL = 1e-10
PROJ_MAX_ITERS = 100_000


def _vec(x):
    return np.atleast_1d(np.asarray(x, dtype=float))


class ConvexSet:
    """Nonempty, closed, bounded, convex subset of ``R^dim``."""

    dim: int

    def support_functional(self, w):
        """``max over y in set of w @ y`` for a functional ``w``."""
        raise NotImplementedError

    def argmax_functional(self, w):
        """A maximizer of ``w @ y`` over the set (deterministic tie-break)."""
        raise NotImplementedError

    def _check_space(self, space):
        if space.dim != self.dim:
            raise DimensionError(f"set of dim {self.dim} queried in space of dim {space.dim}")


@dataclass(frozen=True)
class Point(ConvexSet):
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", _vec(self.p))

    @property
    def dim(self):
        return self.p.size

    def support_functional(self, w):
        return float(np.dot(w, self.p))

    def argmax_functional(self, w):
        return self.p.copy()



@dataclass(frozen=True)
class Ball(ConvexSet):
    """Closed ball ``{y : ||y - center||_metric <= radius}``.

    ``metric=None`` stands for the Euclidean metric.  Queries in any other
    metric raise :class:`MetricMismatchError`.
    """

    center: np.ndarray
    radius: float
    metric: GramSpace = None

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        if not self.radius >= 0:
            raise ValueError(f"ball radius must be >= 0, got {self.radius}")
        if self.metric is not None and self.metric.dim != self.center.size:
            raise DimensionError("ball metric dimension differs from center dimension")

    @property
    def dim(self):
        return self.center.size

    @property
    def space(self):
        return self.metric if self.metric is not None else GramSpace.euclidean(self.dim)

    def _dual_norm(self, w):
        if self.metric is None:
            return float(np.linalg.norm(w))
        return float(np.sqrt(max(np.dot(w, self.metric.solve(w)), 0.0)))

    def support_functional(self, w):
        return float(np.dot(w, self.center)) + self.radius * self._dual_norm(w)

    def argmax_functional(self, w):
        nw = self._dual_norm(w)
        if nw == 0.0 or self.radius == 0.0:
            return self.center.copy()
        riesz_w = w if self.metric is None else self.metric.solve(w)
        return self.center + self.radius * riesz_w / nw


    def _check_space(self, space):
        super()._check_space(space)
        if self.metric is None:
            ok = space.is_diagonal and np.all(space.diag == 1.0)
        else:
            ok = self.metric.same_metric(space)
        if not ok:
            raise MetricMismatchError("ball queried in a metric different from its own")


@dataclass(frozen=True)
class Box(ConvexSet):
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, up = _vec(self.lower), _vec(self.upper)
        if lo.shape != up.shape:
            raise DimensionError("box bounds have different shapes")
        if np.any(lo > up):
            raise ValueError("box requires lower <= upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def dim(self):
        return self.lower.size

    def support_functional(self, w):
        return float(np.dot(w, self.argmax_functional(w)))

    def argmax_functional(self, w):
        return np.where(np.asarray(w) > 0, self.upper, self.lower)



@dataclass(frozen=True)
class Hull(ConvexSet):
    """Convex hull of finitely many vertices (rows of ``vertices``)."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] < 1:
            raise ValueError("hull needs at least one vertex")
        object.__setattr__(self, "vertices", v)

    @property
    def dim(self):
        return self.vertices.shape[1]

    def support_functional(self, w):
        return float(np.max(self.vertices @ w))

    def argmax_functional(self, w):
        return self.vertices[int(np.argmax(self.vertices @ w))].copy()



@dataclass(frozen=True)
class MinkowskiSum(ConvexSet):
    left: ConvexSet
    right: ConvexSet

    def __post_init__(self):
        if self.left.dim != self.right.dim:
            raise DimensionError("Minkowski summands have different dimensions")

    @property
    def dim(self):
        return self.left.dim

    def support_functional(self, w):
        return self.left.support_functional(w) + self.right.support_functional(w)

    def argmax_functional(self, w):
        return self.left.argmax_functional(w) + self.right.argmax_functional(w)


    def _check_space(self, space):
        self.left._check_space(space)
        self.right._check_space(space)


@dataclass(frozen=True)
class ProjectionResult:
    point: np.ndarray
    distance: float
    iterations: int = 0
    gap: float = 0.0
    """Variational-inequality gap ``max_a (x - p, a - p)``; bounds ``||p - p*||^2``."""


def support(A, v, space):
    """Support function ``sigma(v, A) = sup over y in A of (v, y)``."""
    A._check_space(space)
    return A.support_functional(space.apply(space.check(v)))


def support_point(A, v, space):
    """A point of ``A`` where ``(v, .)`` is maximal.

    Ties are broken deterministically: a ball returns its center for ``v = 0``,
    a hull its lowest-index maximizing vertex, a box the lower bound in every
    coordinate where the pairing vanishes.
    """
    A._check_space(space)
    return A.argmax_functional(space.apply(space.check(v)))


def dual_functional(A, x, h, space):
    """``1/2 ||h||^2 + sigma(-h, A - x)``, minimized exactly at ``Proj(x, A) - x``."""
    h = space.check(h)
    return 0.5 * inner(space, h, h) + support(A, -h, space) + inner(space, h, x)


def _vi_gap(A, x, p, space):
    # max over a in A of (x - p, a - p); nonnegative up to rounding iff p = Proj(x, A)
    return support(A, x - p, space) - inner(space, x - p, p)


def project(A, x, space, tol=PROJ_TOL, max_iters=PROJ_MAX_ITERS):
    """Metric projection of ``x`` onto ``A`` in the metric of ``space``.

    Points, balls in their own metric and boxes under a diagonal Gram matrix
    use closed forms.  In a Minkowski sum, point summands translate and ball
    summands combine into one ball ``B(c, R)``; the projection is then
    ``q + min(1, R / ||x - q||) (x - q)`` with ``q = Proj(x - c, S)`` for the
    remaining polyhedral part ``S``.  Hulls, general boxes and sums of them
    use Wolfe's minimum-norm-point method on support points, stopped when
    ``x`` is within ``5 tol (1 + ||x||)`` of the iterate or the
    variational-inequality gap ``max over a in A of (x - p, a - p)``, which
    bounds ``||p - Proj(x, A)||^2``, is below ``(10 tol (1 + ||x||))^2`` or at
    the rounding level of its own evaluation.  The gap is reported with the
    result.

    Raises
    ------
    ProjectionError
        If ``max_iters`` iterations do not reach the tolerance.
    """
    A._check_space(space)
    x = space.check(x)
    p, its = _project(A, x, space, tol, max_iters)
    gap = max(_vi_gap(A, x, p, space), 0.0) if its else 0.0
    return ProjectionResult(point=p, distance=norm(space, x - p), iterations=its, gap=gap)


def _summands(A):
    if isinstance(A, MinkowskiSum):
        return _summands(A.left) + _summands(A.right)
    return [A]


def _project(A, x, space, tol, max_iters):
    if isinstance(A, Point):
        return A.p.copy(), 0
    if isinstance(A, Box) and space.is_diagonal:
        return np.clip(x, A.lower, A.upper), 0
    if isinstance(A, (Ball, MinkowskiSum)):
        # Points translate; balls in the query metric add up to one ball, and
        # Proj(x, S + B(c, R)) moves q = Proj(x - c, S) towards x by at most R.
        parts = _summands(A)
        shift = np.zeros(A.dim)
        radius = 0.0
        rest = []
        for P in parts:
            if isinstance(P, Point):
                shift = shift + P.p
            elif isinstance(P, Ball):
                shift = shift + P.center
                radius += P.radius
            else:
                rest.append(P)
        its = 0
        if not rest:
            q = shift
        else:
            S = rest[0]
            for P in rest[1:]:
                S = MinkowskiSum(S, P)
            q, its = _min_norm_point(S, x - shift, space, tol, max_iters)
            q = q + shift
        d = x - q
        nd = norm(space, d)
        if nd <= radius:
            return x.copy(), its
        return q + (radius / nd) * d, its
    return _min_norm_point(A, x, space, tol, max_iters)


def _min_norm_point(A, x, space, tol, max_iters):
    """Wolfe's minimum-norm-point method for ``Proj(x, A)``, ``A`` a polytope.

    Only support points of ``A`` are queried.  The active set holds affinely
    independent support points; each major step adds the support point in
    direction ``x - y`` and minor steps keep ``y`` in the relative interior of
    the active hull.  Terminates when the variational-inequality gap is
    negligible, ``x`` is attained, or the new support point is already active.
    """
    G = space.todense() if space.dim <= 512 else None

    def gmul(a):
        return a @ G if G is not None else space.apply(a)

    nx = norm(space, x)
    atol = 5.0 * tol * (1.0 + nx)
    gap_tol = (10.0 * tol * (1.0 + nx)) ** 2
    eps = np.finfo(float).eps
    S = A.argmax_functional(space.apply(x - A.argmax_functional(np.zeros(A.dim))))[None, :]
    SG = gmul(S)
    lam = np.ones(1)
    y = S[0].copy()
    gap = np.inf
    for k in range(1, max_iters + 1):
        d = x - y
        w = gmul(d)
        nd = np.sqrt(max(float(w @ d), 0.0))
        if nd <= atol:
            return y, k
        v = A.argmax_functional(w)
        gap = float(w @ v - w @ y)
        scale = 1.0 + nx + np.sqrt(max(float(v @ gmul(v)), 0.0))
        if gap <= max(gap_tol, 64.0 * eps * nd * scale):
            return y, k
        if np.any(np.all(S == v, axis=1)):
            return y, k  # no new support point: stalled at rounding level
        S = np.vstack([S, v])
        SG = np.vstack([SG, gmul(v)])
        lam = np.append(lam, 0.0)
        while True:
            m = S.shape[0]
            kkt = np.zeros((m + 1, m + 1))
            kkt[:m, :m] = SG @ S.T
            kkt[:m, m] = kkt[m, :m] = 1.0
            rhs = np.append(SG @ x, 1.0)
            alpha = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:m]
            if np.all(alpha > 1e-14):
                lam = alpha
                break
            neg = alpha <= 1e-14
            theta = min(1.0, np.min(lam[neg] / (lam[neg] - alpha[neg])))
            lam = lam + theta * (alpha - lam)
            keep = lam > 1e-14
            keep[np.argmin(np.where(neg, lam, np.inf))] = False
            S, SG, lam = S[keep], SG[keep], lam[keep]
            lam /= lam.sum()
            if S.shape[0] == 1:
                break
        y = lam @ S
    raise ProjectionError(f"projection did not converge in {max_iters} iterations",
                          last=max(gap, 0.0), iterations=max_iters)


def prox_support(A, z, space, t=1.0):
    """Proximal map of ``t * sigma(., A)`` in the metric of ``space``.

    Balls and points use closed forms (shrinkage); other sets go through
    the Moreau decomposition ``z - t * Proj(z / t, A)``.
    """
    A._check_space(space)
    z = space.check(z)
    if isinstance(A, Point):
        return z - t * A.p
    if isinstance(A, Ball):
        d = z - t * A.center
        nd = norm(space, d)
        if nd <= t * A.radius:
            return np.zeros_like(z)
        return (1.0 - t * A.radius / nd) * d
    return z - t * project(A, z / t, space).point


def set_norm(A, space, ndirs=4096, seed=0):
    """``||A|| = sup over a in A of ||a||``.

    Exact for points, balls, hulls, small boxes and sums with a point;
    otherwise a sampled lower estimate through :func:`excess_estimate`.
    """
    A._check_space(space)
    if isinstance(A, Point):
        return norm(space, A.p)
    if isinstance(A, Ball):
        return norm(space, A.center) + A.radius
    if isinstance(A, Hull):
        return max(norm(space, v) for v in A.vertices)
    if isinstance(A, Box) and A.dim <= 20:
        return max(norm(space, v) for v in _box_vertices(A))
    if isinstance(A, MinkowskiSum):
        if isinstance(A.left, Point):
            return set_norm(_translate(A.right, A.left.p), space, ndirs, seed)
        if isinstance(A.right, Point):
            return set_norm(_translate(A.left, A.right.p), space, ndirs, seed)
    return excess_estimate(A, Point(np.zeros(A.dim)), space, ndirs, seed)


def diameter(A, space, ndirs=4096, seed=0):
    """Diameter of ``A``; exact for points, balls, hulls and small boxes, sampled otherwise."""
    A._check_space(space)
    if isinstance(A, Point):
        return 0.0
    if isinstance(A, Ball):
        return 2.0 * A.radius
    if isinstance(A, Hull) or (isinstance(A, Box) and A.dim <= 20):
        verts = A.vertices if isinstance(A, Hull) else np.array(list(_box_vertices(A)))
        diff = verts[:, None, :] - verts[None, :, :]
        return float(np.sqrt(max(np.max(np.einsum("ijk,ijk->ij", space.apply(diff), diff)), 0.0)))
    if isinstance(A, MinkowskiSum) and isinstance(A.left, Point):
        return diameter(A.right, space, ndirs, seed)
    if isinstance(A, MinkowskiSum) and isinstance(A.right, Point):
        return diameter(A.left, space, ndirs, seed)
    # width function: sigma(v, A) + sigma(-v, A) over unit v
    w = space.sqrt_apply(sphere_directions(A.dim, ndirs, seed))
    return max(A.support_functional(wi) + A.support_functional(-wi) for wi in w)


def _translate(A, p):
    if isinstance(A, Point):
        return Point(A.p + p)
    if isinstance(A, Ball):
        return Ball(A.center + p, A.radius, A.metric)
    if isinstance(A, Box):
        return Box(A.lower + p, A.upper + p)
    if isinstance(A, Hull):
        return Hull(A.vertices + p)
    return MinkowskiSum(A, Point(p))


def _box_vertices(A):
    for bits in range(2 ** A.dim):
        mask = np.array([(bits >> i) & 1 for i in range(A.dim)], dtype=bool)
        yield np.where(mask, A.upper, A.lower)


_GOLDEN = (1.0 + 5.0 ** 0.5) / 2.0
# R2 sequence constants (plastic number)
_PLASTIC = 1.324717957244746
_R2 = np.array([1.0 / _PLASTIC, 1.0 / _PLASTIC ** 2])


def sphere_directions(dim, n, seed=0):
    """``n`` deterministic, nested, low-discrepancy Euclidean unit vectors.

    Dimension 1 alternates ``+1, -1``; dimension 2 uses the golden-angle
    sequence; dimension 3 an equal-area map of the R2 sequence (a nested
    Fibonacci-type lattice); higher dimensions normalize scrambled-Sobol
    Gaussian samples.  The first ``m`` directions of a request for ``n > m``
    coincide with a request for ``m``.  The seed sets a random offset.
    """
    if n < 1:
        raise ValueError("need at least one direction")
    rng = np.random.default_rng(seed)
    k = np.arange(n)
    if dim == 1:
        return np.where(k % 2 == 0, 1.0, -1.0)[:, None]
    if dim == 2:
        theta = 2.0 * np.pi * ((k / _GOLDEN + rng.random()) % 1.0)
        return np.column_stack([np.cos(theta), np.sin(theta)])
    if dim == 3:
        s = (np.outer(k + 0.5, _R2) + rng.random(2)) % 1.0
        zc = 1.0 - 2.0 * s[:, 0]
        phi = 2.0 * np.pi * s[:, 1]
        rho = np.sqrt(np.maximum(1.0 - zc * zc, 0.0))
        return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), zc])
    sob = qmc.Sobol(d=dim, scramble=True, seed=seed)
    # a power-of-two prefix keeps the sample balanced; prefixes stay nested
    u = np.clip(sob.random_base2(int(np.ceil(np.log2(n))))[:n], 1e-12, 1.0 - 1e-12)
    g = ndtri(u)
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def excess_estimate(A, B, space, ndirs=256, seed=0):
    """Sampled lower estimate of the excess ``e(A, B) = sup over a in A of dist(a, B)``.

    Uses ``e(A, B) = max(0, sup over ||v|| = 1 of sigma(v, A) - sigma(v, B))``
    for convex ``B`` and takes the supremum over :func:`sphere_directions`
    mapped to unit vectors of ``space``.
    """
    A._check_space(space)
    B._check_space(space)
    if ndirs < 1:
        raise ValueError("ndirs must be >= 1")
    w = space.sqrt_apply(sphere_directions(A.dim, ndirs, seed))
    best = 0.0
    for wi in w:
        best = max(best, A.support_functional(wi) - B.support_functional(wi))
    return best
