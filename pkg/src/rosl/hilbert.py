"""Finite-dimensional Hilbert spaces given by a Gram matrix.

Vectors and functionals are plain 1-D numpy arrays of coefficients.  A vector
``x`` is expanded in the basis of the space, a functional ``phi`` is stored by
its action on the basis vectors, so that ``<phi, x> = phi @ x`` and
``(a, b) = a @ G @ b``.
"""

from functools import cached_property

import numpy as np
from scipy import linalg

from .errors import DimensionError, GramError

__all__ = ["GramSpace", "inner", "norm", "riesz", "dual_norm", "pairing"]

COND_LIMIT = 1e14
SYMMETRY_RTOL = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class GramSpace:
    """Real Hilbert space ``R^dim`` with inner product ``a @ gram @ b``.

    Use the constructor for a dense Gram matrix and :meth:`banded` for a
    symmetric banded one (FEM spaces).  The Cholesky factorization is
    computed once at construction.

    Raises
    ------
    GramError
        If the matrix is not symmetric or not positive definite.
    """

    def __init__(self, gram):
        gram = np.atleast_2d(np.asarray(gram, dtype=float))
        if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
            raise GramError(f"Gram matrix must be square, got shape {gram.shape}")
        scale = max(np.abs(gram).max(), np.finfo(float).tiny)
        if np.abs(gram - gram.T).max() > SYMMETRY_RTOL * scale:
            raise GramError("Gram matrix is not symmetric")
        gram = 0.5 * (gram + gram.T)
        try:
            chol = linalg.cholesky(gram, lower=True)
        except linalg.LinAlgError as exc:
            raise GramError("Gram matrix is not positive definite") from exc
        self.dim = gram.shape[0]
        self._dense = _frozen(gram)
        self._ab = None
        self._chol = _frozen(chol)

    @classmethod
    def banded(cls, ab):
        """Build a space from a symmetric banded Gram matrix.

        Parameters
        ----------
        ab : array, shape (u + 1, dim)
            Upper band storage as used by :func:`scipy.linalg.cholesky_banded`:
            ``ab[u + i - j, j] == G[i, j]`` for ``i <= j``.
        """
        ab = np.atleast_2d(np.asarray(ab, dtype=float))
        self = cls.__new__(cls)
        try:
            chol = linalg.cholesky_banded(ab, lower=False)
        except linalg.LinAlgError as exc:
            raise GramError("Gram matrix is not positive definite") from exc
        self.dim = ab.shape[1]
        self._dense = None
        self._ab = _frozen(ab)
        self._chol = _frozen(chol)
        return self

    @classmethod
    def euclidean(cls, dim):
        return cls(np.eye(dim))

    @classmethod
    def diagonal(cls, diag):
        return cls.banded(np.asarray(diag, dtype=float)[None, :])

    @property
    def is_banded(self):
        return self._ab is not None

    @property
    def bandwidth(self):
        if self._ab is None:
            return self.dim - 1
        return self._ab.shape[0] - 1

    @cached_property
    def is_diagonal(self):
        if self._ab is not None:
            return self.bandwidth == 0 or not np.any(self._ab[:-1])
        return not np.any(self._dense - np.diag(np.diag(self._dense)))

    @cached_property
    def diag(self):
        if self._ab is not None:
            return _frozen(self._ab[-1])
        return _frozen(np.diag(self._dense))

    def todense(self):
        if self._dense is not None:
            return self._dense.copy()
        u = self.bandwidth
        g = np.diag(self._ab[u])
        for k in range(1, u + 1):
            off = self._ab[u - k, k:]
            g += np.diag(off, k) + np.diag(off, -k)
        return g

    @property
    def band_storage(self):
        """Upper band storage of the Gram matrix (computed for dense spaces)."""
        if self._ab is not None:
            return self._ab
        g = self._dense
        ab = np.zeros((self.dim, self.dim))
        for k in range(self.dim):
            ab[self.dim - 1 - k, k:] = np.diag(g, k)
        return ab

    def check(self, x, what="vector"):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise DimensionError(f"{what} of shape {x.shape} does not match dim {self.dim}")
        return x

    def apply(self, x):
        """Return ``G @ x``; maps a vector to the functional ``(x, .)``.

        ``x`` may carry leading batch dimensions.
        """
        x = self.check(x)
        if self._dense is not None:
            return x @ self._dense
        ab = self._ab
        u = ab.shape[0] - 1
        y = ab[u] * x
        for k in range(1, u + 1):
            off = ab[u - k, k:]
            y[..., :-k] += off * x[..., k:]
            y[..., k:] += off * x[..., :-k]
        return y

    def solve(self, phi):
        """Return ``G^{-1} @ phi`` using the cached factorization."""
        phi = self.check(phi, "functional")
        if self._dense is not None:
            return linalg.cho_solve((self._chol, True), phi, check_finite=False)
        return linalg.cho_solve_banded((self._chol, False), phi, check_finite=False)

    def sqrt_apply(self, z):
        """Return ``C @ z`` where ``G = C @ C.T`` is the Cholesky factorization.

        If ``z`` is a Euclidean unit vector then ``C @ z`` is the functional of
        a unit vector of this space.
        """
        z = self.check(z)
        if self._dense is not None:
            return z @ self._chol.T
        return self._chol_full_upper().T @ z if z.ndim == 1 else z @ self._chol_full_upper()

    def whiten_inverse(self):
        """Dense matrix ``C^{-T}``: maps Euclidean unit vectors to unit vectors of the space."""
        if self._dense is not None:
            c = self._chol
        else:
            c = self._chol_full_upper().T
        return linalg.solve_triangular(c, np.eye(self.dim), lower=True, trans="T")

    def _chol_full_upper(self):
        cb = self._chol
        u = cb.shape[0] - 1
        r = np.diag(cb[u])
        for k in range(1, u + 1):
            r += np.diag(cb[u - k, k:], k)
        return r

    @cached_property
    def eigmax(self):
        """Largest eigenvalue of the Gram matrix."""
        if self._dense is not None:
            return float(linalg.eigvalsh(self._dense, subset_by_index=[self.dim - 1, self.dim - 1])[0])
        if self.dim == 1 or self.bandwidth == 0:
            return float(self._ab[-1].max())
        return float(linalg.eigvals_banded(self._ab, lower=False, select="i",
                                           select_range=(self.dim - 1, self.dim - 1))[0])

    @cached_property
    def eigmin(self):
        """Smallest eigenvalue of the Gram matrix."""
        if self._dense is not None:
            return float(linalg.eigvalsh(self._dense, subset_by_index=[0, 0])[0])
        if self.dim == 1 or self.bandwidth == 0:
            return float(self._ab[-1].min())
        return float(linalg.eigvals_banded(self._ab, lower=False, select="i", select_range=(0, 0))[0])

    @cached_property
    def condition(self):
        lo = self.eigmin
        return np.inf if lo <= 0 else self.eigmax / lo

    def same_metric(self, other):
        if other is self:
            return True
        if other is None or other.dim != self.dim:
            return False
        if self.is_banded and other.is_banded and self.bandwidth == other.bandwidth:
            return np.array_equal(self._ab, other._ab)
        if self.dim > 512:
            return False
        return np.array_equal(self.todense(), other.todense())

    def __repr__(self):
        kind = f"banded(u={self.bandwidth})" if self.is_banded else "dense"
        return f"GramSpace(dim={self.dim}, {kind})"


def inner(space, a, b):
    """Inner product ``(a, b)`` of two vectors of ``space``."""
    a = space.check(a)
    b = space.check(b)
    return float(np.dot(space.apply(a), b))


def norm(space, a):
    return float(np.sqrt(max(inner(space, a, a), 0.0)))


def pairing(phi, x):
    """Dual pairing ``<phi, x>`` of a functional with a vector."""
    return float(np.dot(phi, x))


def riesz(space, phi):
    """Riesz representer of ``phi``: the vector ``c`` with ``(c, v) = <phi, v>``.

    Raises
    ------
    GramError
        If the condition number of the Gram matrix exceeds ``1e14``.
    """
    if space.condition > COND_LIMIT:
        raise GramError(f"Gram matrix condition number {space.condition:.3g} exceeds {COND_LIMIT:g}")
    return space.solve(phi)


def dual_norm(space, phi):
    """Dual norm ``sup <phi, v> / ||v||``, computed as ``sqrt(phi @ G^{-1} @ phi)``."""
    c = riesz(space, phi)
    return float(np.sqrt(max(np.dot(phi, c), 0.0)))
