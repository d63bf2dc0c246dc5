import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bundle_pd.core import (L1Regularizer, LeastSquaresSmooth, ProblemSpec, QuadraticSmooth,
                            SubspaceProjectors, ZeroRegularizer, eval_lagrangian, gradient_check,
                            hessian_moduli, load_problem_dir, project_null, save_problem_dir,
                            spectral_info)


class TestSpectralInfo:
    def test_identity(self):
        info = spectral_info(np.eye(2), P=np.eye(2), lambda2=0.0, N=1)
        assert info.beta == pytest.approx(0.5) and info.mu == pytest.approx(0.5)
        assert info.sigma_A == pytest.approx(1.0) and info.norm_A == pytest.approx(1.0)

    def test_unit_row(self):
        info = spectral_info(np.array([[1.0, 0.0]]))
        assert info.sigma_A == pytest.approx(1.0) and info.rank_A == 1

    def test_rank_one_against_explicit_svd(self):
        A = np.array([[1.0, 1.0], [1.0, 1.0]])
        info = spectral_info(A)
        # A = 2 u v' with u = v = (1, 1)/sqrt(2)
        u = np.ones(2) / np.sqrt(2)
        assert np.allclose(2 * np.outer(u, u), A)
        assert info.rank_A == 1
        assert info.sigma_A == pytest.approx(2.0) and info.norm_A == pytest.approx(2.0)

    def test_zero_matrix_rejected(self):
        with pytest.raises(ValueError, match="degenerate constraint matrix"):
            spectral_info(np.zeros((2, 3)))

    def test_lambda2_lifts_mu(self, rng):
        P = rng.standard_normal((5, 8))   # P'P singular
        info = spectral_info(rng.standard_normal((3, 8)), P=P, lambda2=1.0, N=5)
        assert info.mu >= 1.0

    def test_hessian_moduli(self):
        assert hessian_moduli(np.diag([3.0, 0.5])) == pytest.approx((3.0, 0.5))


class TestProjectNull:
    def test_second_axis(self):
        assert np.allclose(project_null(np.array([[1.0, 0.0]]), np.array([3.0, 5.0])), [0, 5])

    def test_full_rank_square(self, rng):
        assert np.allclose(project_null(np.eye(3), rng.standard_normal(3)), 0)

    def test_diagonal_direction(self):
        out = project_null(np.array([[1.0, 1.0]]), np.array([1.0, 0.0]))
        assert np.allclose(out, [0.5, -0.5])
        assert abs(out @ np.ones(2)) < 1e-15

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            project_null(np.eye(2), np.ones(3))

    @given(st.integers(0, 10_000))
    def test_idempotent_and_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        m, n = rng.integers(1, 6), rng.integers(1, 8)
        A = rng.standard_normal((m, n))
        g, h = rng.standard_normal(n), rng.standard_normal(n)
        proj = SubspaceProjectors(A)
        pg = proj.null(g)
        assert np.allclose(proj.null(pg), pg, atol=1e-12)
        assert abs(pg @ h - g @ proj.null(h)) <= 1e-12 * (1 + np.linalg.norm(g) * np.linalg.norm(h))
        assert np.allclose(A @ pg, 0, atol=1e-10)

    @given(st.integers(0, 10_000))
    def test_range_bounds(self, seed):
        # sigma^2 ||w||^2 <= ||A'w||^2 <= ||A||^2 ||w||^2 on Range(A)
        rng = np.random.default_rng(seed)
        m, n = rng.integers(1, 6), rng.integers(1, 8)
        r = rng.integers(1, min(m, n) + 1)
        A = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
        info = spectral_info(A)
        w = A @ rng.standard_normal(n)
        lhs, mid, rhs = info.sigma_A ** 2 * (w @ w), (A.T @ w) @ (A.T @ w), info.norm_A ** 2 * (w @ w)
        assert lhs <= mid * (1 + 1e-9) + 1e-12 and mid <= rhs * (1 + 1e-9) + 1e-12


class TestLagrangian:
    def test_feasible(self, scalar_problem):
        assert eval_lagrangian(scalar_problem, np.array([1.0]), np.array([0.0])) == pytest.approx(0.5)

    def test_multiplier_term(self, scalar_problem):
        assert eval_lagrangian(scalar_problem, np.array([0.0]), np.array([2.0])) == pytest.approx(-2.0)

    def test_penalty_term(self, scalar_problem):
        assert eval_lagrangian(scalar_problem, np.zeros(1), np.zeros(1), rho=2.0) == pytest.approx(1.0)

    def test_infinite_h_propagates(self):
        class Indicator:
            def value(self, x):
                return float("inf") if np.any(x < 0) else 0.0

            def prox(self, y, t):
                return np.maximum(y, 0.0)

        p = ProblemSpec(QuadraticSmooth(np.eye(1), np.zeros(1)), Indicator(), [[1.0]], [1.0])
        assert eval_lagrangian(p, np.array([-1.0]), np.zeros(1)) == float("inf")


class TestSmoothFunctions:
    @given(st.integers(0, 10_000))
    def test_least_squares_gradient(self, seed):
        rng = np.random.default_rng(seed)
        f = LeastSquaresSmooth(rng.standard_normal((7, 5)), rng.standard_normal(7), 7, 0.3)
        assert gradient_check(f, rng.standard_normal(5), rng=seed) <= 1e-5

    def test_least_squares_matches_quadratic_form(self, rng):
        P, q = rng.standard_normal((6, 4)), rng.standard_normal(6)
        f = LeastSquaresSmooth(P, q, 6, 0.2)
        x = rng.standard_normal(4)
        quad = 0.5 * x @ f.hessian @ x + f.linear @ x + q @ q / 12
        assert f(x)[0] == pytest.approx(quad)

    def test_quadratic_gradient(self, rng):
        B = rng.standard_normal((4, 4))
        f = QuadraticSmooth(B @ B.T, rng.standard_normal(4), 1.0)
        assert gradient_check(f, rng.standard_normal(4), rng=0) <= 1e-5


class TestRegularizers:
    def test_l1(self):
        h = L1Regularizer(0.5)
        assert h.value(np.array([1.0, -2.0])) == pytest.approx(1.5)
        assert np.allclose(h.prox(np.array([1.0, -0.2]), 1.0), [0.5, 0.0])

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            L1Regularizer(-1.0)

    def test_zero(self):
        h = ZeroRegularizer()
        y = np.array([1.0, 2.0])
        assert h.value(y) == 0.0 and np.array_equal(h.prox(y, 3.0), y)


def test_problem_dimension_mismatch():
    with pytest.raises(ValueError):
        ProblemSpec(QuadraticSmooth(np.eye(2), np.zeros(2)), ZeroRegularizer(), np.eye(2), np.ones(3))


def test_problem_dir_round_trip(tmp_path, rng):
    A, P = rng.standard_normal((3, 4)), rng.standard_normal((5, 4))
    b, q = rng.standard_normal(3), rng.standard_normal(5)
    save_problem_dir(tmp_path, A, b, P, q, {"N": 5, "lambda1": 0.1, "lambda2": 0.0, "seed": 1})
    problem, meta = load_problem_dir(tmp_path)
    assert np.array_equal(problem.A, A) and np.array_equal(problem.b, b)
    assert np.array_equal(problem.f.P, P) and meta["seed"] == 1
    assert problem.h.l1_weight == 0.1
