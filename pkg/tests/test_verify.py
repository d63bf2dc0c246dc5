import json
from types import SimpleNamespace

import numpy as np
import pytest

from bundle_pd.core import spectral_info
from bundle_pd.solvers import Method, SolverConfig, run, rate_params
from bundle_pd.subqp import SubproblemQP, solve_bundle_qp
from bundle_pd.verify import (CheckReport, brute_force_qp, check_contraction, check_feasibility_decay,
                              check_sublinear, kkt_residual, random_qp, rate_instance, reference_solution,
                              rounding_floor, run_suite, small_instance, suite_equivalence, suite_models,
                              suite_rates, suite_subqp)


def fake_trace(dist_v, dist_x=None):
    dist_x = dist_x if dist_x is not None else [0.0] * len(dist_v)
    return [SimpleNamespace(k=k, dist_v=dv, dist_x=dx) for k, (dv, dx) in enumerate(zip(dist_v, dist_x))]


class TestBruteForce:
    def test_single_cut(self):
        qp = SubproblemQP([[1.0, -1.0]], [0.3], 2.0, np.zeros(2))
        res = brute_force_qp(qp)
        assert res.obj == pytest.approx(qp.primal_objective(res.x)) and res.lam.tolist() == [1.0]

    def test_one_dimensional_kink(self):
        res = brute_force_qp(SubproblemQP([[2.0], [0.0]], [-1.0, 0.0], 1.0, np.zeros(1)))
        assert res.obj == pytest.approx(0.0, abs=1e-12) and res.x[0] == pytest.approx(0.0, abs=1e-12)

    def test_grid_cross_check(self):
        qp = SubproblemQP([[2.0], [0.0]], [-1.0, 0.0], 1.0, np.zeros(1))
        grid = np.linspace(-2, 2, 400001)
        vals = np.maximum(2 * grid - 1, 0) + grid ** 2 / 2
        assert brute_force_qp(qp).obj == pytest.approx(vals.min(), abs=1e-10)

    def test_random_two_dim(self, rng):
        qp = SubproblemQP(rng.standard_normal((3, 2)), rng.standard_normal(3), 1.0, rng.standard_normal(2))
        oracle = brute_force_qp(qp)
        assert solve_bundle_qp(qp).primal_obj == pytest.approx(oracle.obj, abs=1e-7)
        assert oracle.cross_check < 1e-9

    def test_caps(self):
        with pytest.raises(ValueError):
            brute_force_qp(SubproblemQP(np.ones((7, 2)), np.zeros(7), 1.0, np.zeros(2)))
        with pytest.raises(ValueError):
            brute_force_qp(SubproblemQP(np.ones((2, 21)), np.zeros(2), 1.0, np.zeros(21)))

    def test_l1_dual_below_primal(self):
        for seed in range(5):
            qp = random_qp(seed, "l1")
            res = brute_force_qp(qp)
            assert res.dual_obj <= qp.primal_objective(res.x) + 1e-12


class TestReference:
    def test_scalar(self, scalar_problem):
        ref = reference_solution(scalar_problem)
        assert (ref.x_star[0], ref.v_star[0], ref.F_star) == pytest.approx((1.0, -1.0, 0.5))
        assert not ref.flagged

    def test_strongly_convex_feasible(self):
        p, _ = rate_instance(0)
        ref = reference_solution(p)
        assert np.linalg.norm(p.A @ ref.x_star - p.b) <= 1e-9

    def test_l1_subgradient_structure(self):
        p = small_instance(0, n=12, m=4, N=16, lambda1=1.0)
        ref = reference_solution(p)
        assert ref.kkt_residual <= 1e-8
        s = -(p.f(ref.x_star)[1] + p.A.T @ ref.v_star)
        zero = np.abs(ref.x_star) < 1e-12
        assert zero.any()
        assert np.all(np.abs(s[zero]) <= 1.0 + 1e-8)

    def test_method_independent(self):
        p = small_instance(1, lambda1=0.1)
        a, b = reference_solution(p, rho=0.5), reference_solution(p, rho=5.0)
        assert a.F_star == pytest.approx(b.F_star, abs=1e-7)
        spec = spectral_info(p.A, beta=p.beta, mu=p.mu)
        for rho in (0.5, 2.0):
            r = run(p, SolverConfig(Method.BMM_D, c_d=1 / rho, rho=rho, m_d=3, max_iter=300,
                                    exact_inner_tol=1e-13))
            assert p.objective(r.x) == pytest.approx(a.F_star, abs=1e-7)
        assert kkt_residual(p, a.x_star, a.v_star) <= 1e-8


class TestContraction:
    def test_geometric_passes(self):
        seq = np.sqrt(0.5 ** np.arange(30))
        assert check_contraction(fake_trace(seq), 0.25, "v_shrink").passed

    def test_constant_fails_at_one(self):
        rep = check_contraction(fake_trace([1.0] * 10), 0.1, "v_shrink")
        assert not rep.passed and rep.first_violation == 1

    def test_lambda_mode(self):
        dx = np.sqrt(0.8 ** np.arange(20))
        assert check_contraction(fake_trace(dx, dx), 0.2, "Lambda_shrink", c_p=1.0, c_d=1.0).passed
        assert not check_contraction(fake_trace(dx, dx), 0.3, "Lambda_shrink", c_p=1.0, c_d=1.0).passed

    def test_missing_reference(self):
        with pytest.raises(ValueError):
            check_contraction(fake_trace([float("nan")] * 3), 0.1, "v_shrink")

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            check_contraction(fake_trace([1.0, 0.5]), 0.1, "nope")

    def test_dual_rate_end_to_end(self):
        p, spec = rate_instance(3)
        ref = reference_solution(p)
        _, c_d, alpha = rate_params(spec, Method.BDA_D, safety=2.0)
        r = run(p, SolverConfig(Method.BDA_D, c_d=c_d, m_d=1, max_iter=100, exact_inner_tol=1e-13),
                reference=ref)
        floor = rounding_floor(ref.F_star, spec.sigma_A ** 2 / spec.beta)
        assert check_contraction(r.trace, alpha, "v_shrink", abs_floor=floor).passed

    def test_feasibility_decay(self):
        trace = [SimpleNamespace(k=k, feas_sq=0.5 ** k) for k in range(20)]
        assert check_feasibility_decay(trace, 0.5, 1.0, 1.0).passed
        trace = [SimpleNamespace(k=k, feas_sq=1.0) for k in range(20)]
        assert not check_feasibility_decay(trace, 0.5, 1.0, 1.0).passed

    def test_sublinear(self):
        assert check_sublinear(1.0 / np.arange(1, 200) ** 2).passed
        assert not check_sublinear(np.ones(200)).passed
        with pytest.raises(ValueError):
            check_sublinear(np.ones(5))


def test_report_json():
    rep = CheckReport("x", "pass", None, 0.5, 3, {"a": np.float64(1.0)})
    d = json.loads(rep.to_json())
    assert d["status"] == "pass" and d["instance_seed"] == 3 and d["details"]["a"] == 1.0


def test_suites_small():
    assert all(r.passed for r in suite_subqp(7, n_instances=10))
    assert all(r.passed for r in suite_models(3, n_seeds=2))
    assert all(r.passed for r in suite_rates(5))
    assert all(r.passed for r in suite_equivalence(2, n_instances=2))
    with pytest.raises(ValueError):
        run_suite("bogus")
