"""Compiled kernels agree with their interpreted source, and the package
runs with compilation switched off."""

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bundle_pd import kernels
from bundle_pd._jit import USE_NUMBA, python_version

needs_numba = pytest.mark.skipif(not USE_NUMBA, reason="numba disabled")


def _prox_case(seed, dense):
    rng = np.random.default_rng(seed)
    n, M = int(rng.integers(2, 12)), int(rng.integers(2, 5))
    At = rng.standard_normal((M, n))
    At -= At.mean(axis=0)
    bt, d = rng.standard_normal(M), rng.standard_normal(n)
    if dense:
        B = rng.standard_normal((n, n))
        C = B @ B.T / n + np.eye(n)
        ev = np.linalg.eigvalsh(C)
        Lg = float(np.linalg.eigvalsh(At @ np.linalg.solve(C, At.T))[-1])
        return (At, bt, d, ev[0], C, True, 0.2, np.full(M, 1 / M), np.zeros(n), Lg, ev[-1], ev[0],
                1e-12, 5000, 1e-13, 5000)
    c = 1.3
    Lg = float(np.linalg.eigvalsh(At @ At.T)[-1]) / c
    return (At, bt, d, c, np.empty((0, 0)), False, 0.2, np.full(M, 1 / M), np.zeros(n), Lg, c, c,
            1e-12, 5000, 1e-13, 5000)


@needs_numba
@given(st.integers(0, 10_000))
def test_project_simplex_equivalent(seed):
    y = np.random.default_rng(seed).standard_normal(7) * 3
    assert np.allclose(kernels.project_simplex(y), python_version(kernels.project_simplex)(y), atol=1e-15)


@needs_numba
def test_soft_threshold_equivalent(rng):
    y = rng.standard_normal(50)
    assert np.array_equal(kernels.soft_threshold(y, 0.4), python_version(kernels.soft_threshold)(y, 0.4))


@needs_numba
@pytest.mark.parametrize("seed", range(5))
def test_apg_equivalent(seed):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((8, 8))
    C = B @ B.T + np.eye(8)
    ev = np.linalg.eigvalsh(C)
    args = (C, rng.standard_normal(8), 0.3, np.zeros(8), ev[-1], ev[0], 1e-12, 10000)
    a, b = kernels.apg_quad_l1(*args), python_version(kernels.apg_quad_l1)(*args)
    assert np.allclose(a[0], b[0], atol=1e-10) and a[3] and b[3]


@needs_numba
@pytest.mark.parametrize("seed", range(5))
def test_simplex_fista_affine_equivalent(seed):
    rng = np.random.default_rng(seed)
    At = rng.standard_normal((4, 6))
    Q = -(At @ At.T)
    args = (Q, rng.standard_normal(4), 0.0, np.full(4, 0.25), float(np.linalg.eigvalsh(-Q)[-1]),
            1e-12, 5000)
    a, b = kernels.simplex_fista_affine(*args), python_version(kernels.simplex_fista_affine)(*args)
    assert np.allclose(a[0], b[0], atol=1e-10)


@needs_numba
@pytest.mark.parametrize("dense", [False, True])
@pytest.mark.parametrize("seed", range(4))
def test_simplex_fista_prox_equivalent(seed, dense):
    args = _prox_case(seed, dense)
    a, b = kernels.simplex_fista_prox(*args), python_version(kernels.simplex_fista_prox)(*args)
    assert np.allclose(a[0], b[0], atol=1e-9) and np.allclose(a[1], b[1], atol=1e-9)


def test_pure_numpy_mode_runs():
    code = ("import numpy as np\n"
            "from bundle_pd._jit import USE_NUMBA\n"
            "from bundle_pd.verify import small_instance, reference_solution\n"
            "from bundle_pd.solvers import SolverConfig, run\n"
            "assert not USE_NUMBA\n"
            "p = small_instance(1, lambda1=0.05)\n"
            "r = run(p, SolverConfig('BMM', c_p=5 * p.beta, c_d=2.0, rho=1.0, m_p=3, m_d=3, max_iter=30),"
            " reference=reference_solution(p))\n"
            "print(repr(r.final.residual))\n")
    env = dict(os.environ, BUNDLE_PD_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, timeout=300)
    assert out.returncode == 0, out.stderr
    plain = float(out.stdout.strip())
    from bundle_pd.solvers import SolverConfig, run
    from bundle_pd.verify import reference_solution, small_instance
    p = small_instance(1, lambda1=0.05)
    r = run(p, SolverConfig("BMM", c_p=5 * p.beta, c_d=2.0, rho=1.0, m_p=3, m_d=3, max_iter=30),
            reference=reference_solution(p))
    assert r.final.residual == pytest.approx(plain, rel=1e-6, abs=1e-12)
