import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import linalg

from rosl.elliptic import build_grid, builtin_rhs
from rosl.errors import ConstraintError
from rosl.gelfand import (GelfandData, check_norm_equivalence, composite_constants,
                          embedding_constant, h_estimate_factor)
from rosl.hilbert import GramSpace, dual_norm, inner, norm, pairing, riesz


def fem_pair(N):
    h = 1.0 / N
    ab = np.zeros((2, N - 1))
    ab[1] = 2.0 / h
    ab[0, 1:] = -1.0 / h
    return GramSpace.banded(ab), GramSpace.diagonal(np.full(N - 1, h))


class TestEmbeddingConstant:
    def test_identical(self):
        K = GramSpace(np.diag([1.0, 2.0, 3.0]))
        assert embedding_constant(K, K) == pytest.approx(1.0)

    def test_scalar_pencil(self, rng):
        M = np.cov(rng.standard_normal((4, 20)))
        assert embedding_constant(GramSpace(2 * M), GramSpace(M)) == pytest.approx(1 / np.sqrt(2))

    def test_fem_closed_form(self):
        # lumped P1: lambda_1 = (4 / h^2) sin^2(pi h / 2)
        for N in (16, 200):
            K, M = fem_pair(N)
            lam = 4 * N ** 2 * np.sin(np.pi / (2 * N)) ** 2
            assert embedding_constant(K, M) == pytest.approx(1 / np.sqrt(lam), rel=1e-9)

    def test_fem_dense_eigensolve(self):
        K, M = fem_pair(40)
        lam = linalg.eigh(K.todense(), M.todense(), eigvals_only=True)[0]
        assert embedding_constant(K, M) == pytest.approx(1 / np.sqrt(lam), rel=1e-9)

    def test_continuum_limit(self):
        K, M = fem_pair(1024)
        assert abs(embedding_constant(K, M) * np.pi - 1) <= 1e-3


class TestCompositeConstants:
    def test_bsp1_kappa(self):
        _, _, kappa, ok = composite_constants(-1.0, -1.0, 1.5, 1 / np.pi)
        assert kappa == pytest.approx(0.5 + 3 / (4 * (np.pi ** 2 + 1)), abs=1e-12)
        assert kappa == pytest.approx(0.569, abs=5e-4) and ok

    def test_no_reaction(self):
        l, L, kappa, ok = composite_constants(-1.0, 0.0, 0.0, 0.3)
        assert (l, L, kappa, ok) == (-1.0, 1.0, 0.5, True)

    def test_case_two(self):
        c = 1 / np.pi
        lH, Lf = 0.05 * np.pi ** 2, 0.1
        _, L, kappa, ok = composite_constants(-1.0, lH, Lf, c)
        assert L == pytest.approx((1 + c * c * Lf) / (1 - c * c * lH))
        assert ok == (Lf < np.pi ** 2 * (1 - 0.1))

    @given(Lf=st.floats(0, 50), c=st.floats(0.05, 2.0))
    def test_cases_agree_at_zero(self, Lf, c):
        L1 = 1 + c * c * Lf / (1 - c * c * 0.0)
        assert composite_constants(-1.0, 0.0, Lf, c)[1] == L1

    @given(lH=st.floats(-20, 0.99), Lf=st.floats(0, 20))
    def test_admissibility_equivalence(self, lH, Lf):
        c = 1.0
        _, _, kappa, ok = composite_constants(-1.0, lH, Lf, c)
        crit = Lf < 1 / c ** 2 - lH if lH <= 0 else Lf < 1 / c ** 2 - 2 * lH
        if abs(kappa - 1) > 1e-12:
            assert ok == crit

    def test_rejects_other_lV(self):
        with pytest.raises(ConstraintError, match="lV = -1"):
            composite_constants(-2.0, 0.0, 1.0, 0.3)

    def test_rejects_constraint(self):
        with pytest.raises(ConstraintError):
            composite_constants(-1.0, 20.0, 1.0, 1 / np.pi)


class TestGelfandData:
    def test_constraint(self):
        K, M = fem_pair(8)
        with pytest.raises(ConstraintError):
            GelfandData(K, M, lV=-1.0, lH=50.0)
        with pytest.raises(ConstraintError):
            GelfandData(K, M, lV=1.0, lH=0.0)

    @given(seed=st.integers(0, 2**31), lH=st.floats(-5, 5))
    def test_w_identity(self, seed, lH):
        K, M = fem_pair(16)
        data = GelfandData(K, M, lV=-1.0, lH=lH)
        u = np.random.default_rng(seed).standard_normal(15)
        w2 = norm(data.W, u) ** 2
        assert abs(w2 - (norm(K, u) ** 2 - lH * norm(M, u) ** 2)) <= 1e-12 * w2

    @given(seed=st.integers(0, 2**31))
    def test_riesz_pairing(self, seed):
        K, M = fem_pair(16)
        data = GelfandData(K, M, lV=-1.5, lH=-2.0)
        phi, v = np.random.default_rng(seed).standard_normal((2, 15))
        assert inner(data.W, riesz(data.W, phi), v) == pytest.approx(pairing(phi, v), rel=1e-10, abs=1e-12)


class TestNormEquivalence:
    def test_degenerate(self):
        K, M = fem_pair(16)
        data = GelfandData(K, M, lV=-2.0, lH=0.0)
        rep = check_norm_equivalence(data, samples=20)
        assert rep.ok and abs(rep.worst_slack) <= 1e-10

    @pytest.mark.parametrize("lH", [-1.0, 0.5, 5.0])
    def test_grid(self, lH):
        K, M = fem_pair(64)
        rep = check_norm_equivalence(GelfandData(K, M, lV=-1.0, lH=lH), samples=100, seed=3)
        assert rep.ok and rep.violations == 0

    def test_coordinate_vector(self):
        I = GramSpace(np.eye(3))
        data = GelfandData(I, I, lV=-1.0, lH=-1.0)
        y = np.array([1.0, 0.0, 0.0])
        assert dual_norm(data.W, y) ** 2 == pytest.approx(0.5)
        rep = check_norm_equivalence(data, samples=10)
        assert rep.ok and rep.details["a"] == 1.0 and rep.details["b"] == 2.0


class TestHEstimate:
    def test_factor_cases(self):
        c = 0.5
        assert h_estimate_factor(-1.0, -1.0, c) == pytest.approx(c / (2 * np.sqrt(1 + c * c)))
        assert h_estimate_factor(-1.0, 1.0, c) == pytest.approx(c / (2 * (1 - c * c)))
        assert h_estimate_factor(-1.0, 0.0, c) == pytest.approx(c / 2)

    def test_first_step_bound_on_grid(self):
        # ||xbar - x_c||_H <= C ||ybar - yt||_{V*} for the first step of an elliptic run
        from rosl.elliptic import initial_data, projection_step, solve_pdi, PdiOptions
        from rosl.solver import SolveOptions

        f = builtin_rhs("bsp1")
        grid = build_grid(64, f)
        u0 = grid.join(initial_data("bsp1", grid.nodes))
        h0, r0, _ = projection_step(grid, u0)
        xc = u0 + 0.5 * h0
        rep = solve_pdi(grid, u0, PdiOptions(outer=SolveOptions(max_iters=60, tol_residual=1e-9)))
        xbar = rep.solution
        phi = grid.W.apply(h0)  # the residual functional, W-Riesz representer h0
        C = h_estimate_factor(-1.0, f.l_f, grid.gelfand.cVH)
        assert norm(grid.M, xbar - xc) <= C * dual_norm(grid.K, phi) + 1e-6
