"""Compare compiled and interpreted versions of the hot kernels.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel is timed on fixed inputs through its numba dispatcher and
through the underlying Python function (the same code path used with
``BUNDLE_PD_NUMBA=0``). Results are checked to agree before timing.
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from bundle_pd import kernels
from bundle_pd._jit import USE_NUMBA, python_version


def _cases(rng):
    n, M = 200, 10
    B = rng.standard_normal((n, n))
    C = B.T @ B / n + np.eye(n)
    ev = np.linalg.eigvalsh(C)
    lin = rng.standard_normal(n)
    At = rng.standard_normal((M, n))
    At_c = At - At.mean(axis=0)
    bt = rng.standard_normal(M)
    d = rng.standard_normal(n)
    c = 2.0
    Q = -(At_c @ At_c.T) / c
    r = At_c @ (-d / c) + bt
    Lg = float(np.linalg.eigvalsh(-Q)[-1])
    lam0 = np.full(M, 1.0 / M)
    Lg_dense = float(np.linalg.eigvalsh(At_c @ np.linalg.solve(C, At_c.T))[-1])
    return {
        "project_simplex": (kernels.project_simplex, (rng.standard_normal(1000),)),
        "soft_threshold": (kernels.soft_threshold, (rng.standard_normal(10000), 0.3)),
        "apg_quad_l1": (kernels.apg_quad_l1, (C, lin, 0.1, np.zeros(n), ev[-1], ev[0], 1e-12, 20000)),
        "simplex_fista_affine": (kernels.simplex_fista_affine, (Q, r, 0.0, lam0, Lg, 1e-12, 20000)),
        "simplex_fista_prox_diag": (kernels.simplex_fista_prox,
                                    (At_c, bt, d, c, np.empty((0, 0)), False, 0.1, lam0, np.zeros(n),
                                     Lg, c, c, 1e-12, 20000, 1e-12, 20000)),
        "simplex_fista_prox_dense": (kernels.simplex_fista_prox,
                                     (At_c, bt, d, ev[0], C, True, 0.1, lam0, np.zeros(n), Lg_dense,
                                      ev[-1], ev[0], 1e-10, 2000, 1e-12, 20000)),
    }


def _first_array(out):
    return np.asarray(out[0] if isinstance(out, tuple) else out, dtype=float)


def _time(func, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        func(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="write results to this file")
    args = ap.parse_args(argv)
    if not USE_NUMBA:
        print("numba disabled (BUNDLE_PD_NUMBA=0): both columns run interpreted code")
    rng = np.random.default_rng(0)
    rows = []
    print(f"{'kernel':<28}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name, (func, fargs) in _cases(rng).items():
        py = python_version(func)
        t0 = time.perf_counter()
        out_jit = func(*fargs)   # includes compilation (or cache load)
        first_call = time.perf_counter() - t0
        out_py = py(*fargs)
        err = float(np.max(np.abs(_first_array(out_jit) - _first_array(out_py))))
        if err > 1e-8:
            raise SystemExit(f"{name}: compiled and interpreted results differ by {err:.2e}")
        t_jit = _time(func, fargs, args.repeat)
        t_py = _time(py, fargs, max(1, args.repeat // 2))
        rows.append({"kernel": name, "numba_s": t_jit, "numpy_s": t_py, "first_call_s": first_call,
                     "speedup": t_py / t_jit, "max_abs_diff": err})
        print(f"{name:<28}{1e3 * t_jit:>12.3f}{1e3 * t_py:>12.3f}{t_py / t_jit:>10.1f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return rows


if __name__ == "__main__":
    main()
