"""Mixed inner products over a Gelfand pair ``V subset H`` and composite constants.

Given Gram matrices ``K`` (the inner product of ``V``) and ``M`` (that of
``H``) on a common coordinate space, and constants ``lV < 0``, ``lH``, the
bilinear form

    (u, w)_W = -lV (u, w)_V - lH (u, w)_H

is an inner product equivalent to that of ``V`` as long as
``lH < -lV / cVH^2``, with ``cVH`` the embedding constant
``||u||_H <= cVH ||u||_V``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConstraintError, ConvergenceError, DimensionError
from .hilbert import GramSpace, dual_norm, norm

__all__ = ["GelfandData", "embedding_constant", "composite_constants", "check_norm_equivalence",
           "h_estimate_factor", "NormEquivalenceReport"]


def _combine(K, M, a, b):
    """Gram space of ``a K + b M``, banded when both inputs are."""
    if K.is_banded and M.is_banded:
        u = max(K.bandwidth, M.bandwidth)
        ab = np.zeros((u + 1, K.dim))
        ab[u - K.bandwidth:] += a * K.band_storage
        ab[u - M.bandwidth:] += b * M.band_storage
        return GramSpace.banded(ab)
    return GramSpace(a * K.todense() + b * M.todense())


def embedding_constant(K, M, rtol=1e-10, max_iters=10_000):
    """``cVH = 1 / sqrt(lambda_min)`` of the pencil ``K u = lambda M u``.

    Inverse power iteration with Rayleigh quotients, started from the
    all-ones vector, until successive eigenvalue estimates agree to ``rtol``.
    For small dense problems the result is refined by a direct generalized
    eigensolve.

    Raises
    ------
    ConvergenceError
        After ``max_iters`` iterations without reaching ``rtol``.
    """
    if K.dim != M.dim:
        raise DimensionError("K and M have different dimensions")
    if not K.is_banded and K.dim <= 64:
        lam = float(linalg.eigh(K.todense(), M.todense(), eigvals_only=True, subset_by_index=[0, 0])[0])
        return 1.0 / np.sqrt(lam)
    u = np.ones(K.dim)
    u /= norm(M, u)
    lam = np.inf
    for k in range(1, max_iters + 1):
        w = K.solve(M.apply(u))
        w /= norm(M, w)
        lam_new = float(np.dot(w, K.apply(w)))  # Rayleigh quotient, ||w||_M = 1
        if abs(lam_new - lam) <= rtol * lam_new:
            return 1.0 / np.sqrt(lam_new)
        u, lam = w, lam_new
    raise ConvergenceError(f"inverse power iteration did not converge in {max_iters} steps",
                           last=abs(lam_new - lam) / lam_new, iterations=max_iters)


@dataclass(frozen=True)
class GelfandData:
    """A ``(V, H)`` Gram pair with the mixed ``W`` inner product.

    Raises
    ------
    ConstraintError
        Unless ``lV < 0`` and ``lH < -lV / cVH^2``.
    """

    K: GramSpace
    M: GramSpace
    lV: float
    lH: float
    cVH: float = None
    W: GramSpace = field(init=False)

    def __post_init__(self):
        if self.K.dim != self.M.dim:
            raise DimensionError("K and M have different dimensions")
        if not self.lV < 0:
            raise ConstraintError(f"lV must be negative, got {self.lV}")
        c = self.cVH if self.cVH is not None else embedding_constant(self.K, self.M)
        object.__setattr__(self, "cVH", float(c))
        bound = -self.lV / c ** 2
        if not self.lH < bound:
            raise ConstraintError(f"lH = {self.lH:.6g} violates lH < -lV / cVH^2 = {bound:.6g}")
        object.__setattr__(self, "W", _combine(self.K, self.M, -self.lV, -self.lH))

    @property
    def dim(self):
        return self.K.dim


def composite_constants(lV, lH, Lf, cVH):
    """Constants of ``F = F_V + F_H`` for the elliptic model with ``lV = -1``.

    Returns
    -------
    l, L, kappa : float
        ``l = -1``; ``L = 1 + c^2 Lf / (1 - c^2 lH)`` for ``lH <= 0`` and
        ``L = (1 + c^2 Lf) / (1 - c^2 lH)`` for ``lH >= 0``; ``kappa = L / 2``.
    admissible : bool
        ``kappa < 1``.

    Raises
    ------
    ConstraintError
        If ``lV != -1`` or ``lH >= 1 / cVH^2``.
    """
    if lV != -1:
        raise ConstraintError(f"composite constants are only derived for lV = -1, got lV = {lV}")
    if Lf < 0 or cVH <= 0:
        raise ValueError("need Lf >= 0 and cVH > 0")
    c2 = cVH * cVH
    if not lH < 1.0 / c2:
        raise ConstraintError(f"lH = {lH:.6g} violates lH < 1 / cVH^2 = {1.0 / c2:.6g}")
    if lH <= 0:
        L = 1.0 + c2 * Lf / (1.0 - c2 * lH)
    else:
        L = (1.0 + c2 * Lf) / (1.0 - c2 * lH)
    kappa = L / 2.0
    return -1.0, L, kappa, kappa < 1.0


def h_estimate_factor(lV, lH, cVH):
    """Factor ``C`` in ``||xbar - x_c||_H <= C ||ybar - yt||_{V*}``.

    ``C = c / (2 sqrt(lV (lV + c^2 lH)))`` for ``lH <= 0`` and
    ``C = c / (2 |lV + c^2 lH|)`` for ``lH >= 0``.
    """
    c2 = cVH * cVH
    s = lV + c2 * lH
    if not (lV < 0 and s < 0):
        raise ConstraintError("need lV < 0 and lV + cVH^2 lH < 0")
    if lH <= 0:
        return cVH / (2.0 * np.sqrt(lV * s))
    return cVH / (2.0 * abs(s))


@dataclass
class NormEquivalenceReport:
    worst_slack: float
    """Smallest relative slack ``(upper - middle) / upper`` over all checked inequalities."""
    violations: int
    samples: int
    ok: bool
    details: dict


def _chain_bounds(lV, lH, c2):
    # primal: a ||u||_V^2 <= ||u||_W^2 <= b ||u||_V^2
    # dual:   ||y||_{W*}^2 between 1/b and 1/a times ||y||_{V*}^2
    if lH <= 0:
        return -lV, -lV - c2 * lH
    return -lV - c2 * lH, -lV


def check_norm_equivalence(data, samples=100, seed=0, rtol=1e-9):
    """Sample the equivalence of ``||.||_W`` with ``||.||_V`` and its dual version.

    Checks ``a ||u||_V^2 <= ||u||_W^2 <= b ||u||_V^2`` and
    ``(1/b) ||y||_{V*}^2 <= ||y||_{W*}^2 <= (1/a) ||y||_{V*}^2``, where
    ``(a, b) = (-lV, -lV - c^2 lH)`` for ``lH <= 0`` and
    ``(-lV - c^2 lH, -lV)`` for ``lH >= 0``, on seeded Gaussian vectors and
    functionals.  Also checks the identity
    ``||u||_W^2 = -lV ||u||_V^2 - lH ||u||_H^2``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    c2 = data.cVH ** 2
    a, b = _chain_bounds(data.lV, data.lH, c2)
    worst = np.inf
    viol = 0
    ident = 0.0
    for _ in range(samples):
        u = rng.standard_normal(data.dim)
        y = rng.standard_normal(data.dim)
        nv2, nh2, nw2 = norm(data.K, u) ** 2, norm(data.M, u) ** 2, norm(data.W, u) ** 2
        ident = max(ident, abs(nw2 - (-data.lV * nv2 - data.lH * nh2)) / nw2)
        dv2, dw2 = dual_norm(data.K, y) ** 2, dual_norm(data.W, y) ** 2
        for lo, mid, hi in ((a * nv2, nw2, b * nv2), (dv2 / b, dw2, dv2 / a)):
            s = min(mid - lo, hi - mid) / hi
            worst = min(worst, s)
            if s < -rtol:
                viol += 1
    if ident > 1e-12:
        viol += 1
    return NormEquivalenceReport(worst_slack=float(worst), violations=viol, samples=samples,
                                 ok=viol == 0, details={"a": a, "b": b, "identity_rel_error": ident})
