"""Independent oracles and convergence-rate checkers.

The oracles here deliberately avoid the solver code paths they validate:
``brute_force_qp`` uses active-set enumeration (h = 0) and a derivative-free
pattern search over the simplex dual, and the dual-function oracle uses
coordinate descent for l1 problems.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .core import (L1Regularizer, LeastSquaresSmooth, ProblemSpec, SpectralInfo, SubspaceProjectors,
                   ZeroRegularizer, hessian_moduli, l1_weight_of, spectral_info)
from .kernels import soft_threshold
from .models import Orientation, Policy
from .solvers import Method, SolverConfig, _ExactPrimal, run, rate_alpha, rate_params
from .subqp import SubproblemQP, solve_bundle_qp

MAX_BRUTE_N = 20
MAX_BRUTE_M = 6


# ------------------------------------------------------------------ QP oracle

def _cd_quad_l1(C, lin, w, x0=None, tol=1e-15, max_sweeps=100000):
    """Coordinate descent for 0.5 x'Cx + lin'x + w||x||_1 (exact per coordinate)."""
    n = lin.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    Cx = C @ x
    diag = np.diag(C).copy()
    for _ in range(max_sweeps):
        delta = 0.0
        for i in range(n):
            rest = lin[i] + Cx[i] - diag[i] * x[i]
            xi = -np.sign(rest) * max(abs(rest) - w, 0.0) / diag[i]
            step = xi - x[i]
            if step != 0.0:
                Cx += step * C[:, i]
                x[i] = xi
                delta = max(delta, abs(step))
        if delta <= tol * (1.0 + np.abs(x).max()):
            break
    return x


class _DualOracle:
    """g(lam) for a SubproblemQP, computed without the package's FISTA code."""

    def __init__(self, qp: SubproblemQP):
        self.qp = qp
        self.w = l1_weight_of(qp.h)
        if self.w is None:
            raise ValueError("brute_force_qp supports h = 0 and h = w||.||_1 only")
        self.C = qp.C * np.eye(qp.n) if not qp.dense else qp.C
        self._last_x = None

    def x_of(self, lam):
        qp = self.qp
        lin = qp.d + qp.A_tilde.T @ lam
        if not qp.dense:
            return soft_threshold(-lin / qp.C, self.w / qp.C)
        if self.w == 0.0:
            return scipy.linalg.solve(self.C, -lin, assume_a="pos")
        self._last_x = _cd_quad_l1(self.C, lin, self.w, self._last_x)
        return self._last_x

    def value(self, lam):
        qp = self.qp
        x = self.x_of(lam)
        s = qp.A_tilde @ x + qp.b_tilde
        return (self.w * np.abs(x).sum() + 0.5 * x @ self.C @ x + qp.d @ x + lam @ s), x


def _simplex_grid(M, K):
    for comp in itertools.combinations(range(K + M - 1), M - 1):
        parts = np.diff(np.concatenate(([-1], comp, [K + M - 1]))) - 1
        yield parts / K


def _enumerate_active_sets(qp: SubproblemQP):
    """Exact minimizer for h = 0 by trying every active set of cuts."""
    C = qp.C * np.eye(qp.n) if not qp.dense else qp.C
    At, bt, d = qp.A_tilde, qp.b_tilde, qp.d
    Cinv_At = scipy.linalg.solve(C, At.T, assume_a="pos")
    Cinv_d = scipy.linalg.solve(C, d, assume_a="pos")
    best = (np.inf, None)
    M = qp.M
    for size in range(1, M + 1):
        for S in itertools.combinations(range(M), size):
            S = list(S)
            # unknowns (lam_S, t): A_S x + b_S = t 1, 1'lam = 1, x = -C^{-1}(d + A_S' lam)
            K = np.zeros((size + 1, size + 1))
            K[:size, :size] = -At[S] @ Cinv_At[:, S]
            K[:size, size] = -1.0
            K[size, :size] = 1.0
            rhs = np.concatenate((At[S] @ Cinv_d - bt[S], [1.0]))
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
            lam_S, t = sol[:size], sol[size]
            if lam_S.min() < -1e-12:
                continue
            x = -(Cinv_d + Cinv_At[:, S] @ lam_S)
            s = At @ x + bt
            if s.max() > t + 1e-9 * (1.0 + abs(t)):
                continue
            obj = qp.primal_objective(x)
            if obj < best[0]:
                best = (obj, x)
    return best


@dataclass
class BruteForceResult:
    obj: float
    x: np.ndarray
    dual_obj: float
    lam: np.ndarray
    cross_check: Optional[float] = None   # |enumeration - pattern search| for h = 0

    def __iter__(self):
        return iter((self.obj, self.x))


def brute_force_qp(qp: SubproblemQP, grid_points: int = 3000, final_step: float = 1e-14) -> BruteForceResult:
    """Solve a small bundle subproblem by derivative-free means.

    The simplex dual is maximized by evaluation on a uniform simplex grid
    (about ``grid_points`` points) followed by a compass search along the
    edge directions e_i - e_j with halving steps down to ``final_step``.
    The reported objective is the best dual value found. For h = 0 the
    exact active-set enumeration is also run and its objective is returned;
    the pattern-search value is kept as a cross check.
    """
    if qp.n > MAX_BRUTE_N or qp.M > MAX_BRUTE_M:
        raise ValueError(f"brute_force_qp is capped at n <= {MAX_BRUTE_N}, M <= {MAX_BRUTE_M}")
    oracle = _DualOracle(qp)
    M = qp.M
    if M == 1:
        lam = np.ones(1)
        g, x = oracle.value(lam)
        return BruteForceResult(qp.primal_objective(x), x, g, lam, 0.0 if oracle.w == 0 else None)

    if qp.dense and oracle.w != 0.0:
        grid_points = min(grid_points, 200)
    K = 1
    while math.comb(K + 1 + M - 1, M - 1) <= grid_points:
        K += 1
    best_g, best_lam = -np.inf, None
    for lam in _simplex_grid(M, K):
        g, _ = oracle.value(lam)
        if g > best_g:
            best_g, best_lam = g, lam
    lam, g = best_lam.copy(), best_g
    step = 1.0 / K
    dirs = [(i, j) for i in range(M) for j in range(M) if i != j]
    while step >= final_step:
        improved = False
        for i, j in dirs:
            t = min(step, lam[j])
            if t <= 0.0:
                continue
            cand = lam.copy()
            cand[i] += t
            cand[j] -= t
            gc, _ = oracle.value(cand)
            if gc > g:
                lam, g, improved = cand, gc, True
        if not improved:
            step *= 0.5
    g, x = oracle.value(lam)
    # g is second-order accurate in the error of lam; the primal value at
    # x_lam only first-order, so the dual value is reported
    result = BruteForceResult(g, x, g, lam)
    if oracle.w == 0.0:
        exact_obj, exact_x = _enumerate_active_sets(qp)
        if exact_x is not None:
            result.cross_check = abs(exact_obj - g)
            result.obj, result.x = exact_obj, exact_x
    return result


def random_qp(seed: int, h_kind: str = "zero", dense: bool = False, n_max: int = 20,
              M_max: int = 5) -> SubproblemQP:
    """Seeded random bundle subproblem for oracle comparisons."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, n_max + 1))
    M = int(rng.integers(1, M_max + 1))
    At = rng.standard_normal((M, n))
    bt = rng.standard_normal(M)
    d = rng.standard_normal(n)
    if dense:
        B = rng.standard_normal((n, n))
        C = 0.5 * np.eye(n) + B @ B.T / n
    else:
        C = float(rng.uniform(0.5, 5.0))
    h = L1Regularizer(float(rng.uniform(0.05, 1.0))) if h_kind == "l1" else ZeroRegularizer()
    return SubproblemQP(At, bt, C, d, h)


# ---------------------------------------------------------- reference solution

@dataclass
class ReferenceSolution:
    x_star: np.ndarray
    v_star: np.ndarray
    F_star: float
    kkt_residual: float
    flagged: bool = False
    method: str = ""


def kkt_residual(problem: ProblemSpec, x, v) -> float:
    """max(||Ax - b||, ||x - prox_h(x - grad f(x) - A'v)||)."""
    _, g = problem.f(x)
    feas = np.linalg.norm(problem.A @ x - problem.b)
    stat = np.linalg.norm(x - problem.h.prox(x - g - problem.A.T @ v, 1.0))
    return float(max(feas, stat))


def _polish_l1(problem: ProblemSpec, x, H, g, w, proj):
    """Solve the equality-constrained QP on the current support and signs."""
    A, b = problem.A, problem.b
    scale = max(1.0, float(np.abs(x).max()))
    S = np.flatnonzero(np.abs(x) > 1e-9 * scale)
    if S.size == 0:
        return None
    sgn = np.sign(x[S])
    m = A.shape[0]
    K = np.block([[H[np.ix_(S, S)], A[:, S].T], [A[:, S], np.zeros((m, m))]])
    rhs = np.concatenate((-(g[S] + w * sgn), b))
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    xs = np.zeros_like(x)
    xs[S] = sol[:S.size]
    if np.any(np.sign(xs[S]) != sgn):
        return None
    return xs, proj.range(sol[S.size:])


def reference_solution(problem: ProblemSpec, tol: float = 1e-10, max_iter: int = 100000,
                       rho: Optional[float] = None) -> ReferenceSolution:
    """High-accuracy (x*, v*, F*).

    Quadratic f with h = 0: one KKT linear solve. Otherwise the method of
    multipliers with exact inner solves, followed for l1 problems by an
    equality-constrained solve on the identified support. v* is the
    multiplier in Range(A).
    """
    A, b = problem.A, problem.b
    proj = SubspaceProjectors(A)
    H = getattr(problem.f, "hessian", None)
    g = getattr(problem.f, "linear", None)
    w = l1_weight_of(problem.h)
    m, n = A.shape

    def finish(x, v, method):
        v = proj.range(v)
        res = kkt_residual(problem, x, v)
        return ReferenceSolution(x, v, problem.objective(x), res, res > 1e-8, method)

    if H is not None and w == 0.0:
        K = np.block([[H, A.T], [A, np.zeros((m, m))]])
        sol, *_ = np.linalg.lstsq(K, np.concatenate((-g, b)), rcond=None)
        return finish(sol[:n], sol[n:], "kkt")

    if rho is None:
        beta = hessian_moduli(H)[0] if H is not None else (problem.beta or 1.0)
        rho = beta / max(proj_sigma2(A), 1e-300)
    exact = _ExactPrimal(problem, rho, 1e-13, 200000)
    x, v = np.zeros(n), np.zeros(m)
    best = None
    for it in range(max_iter):
        x, _, _ = exact.solve(v, x)
        v = v + rho * (A @ x - b)
        if it % 10 == 9 or it == max_iter - 1:
            res = kkt_residual(problem, x, v)
            if best is None or res < best[0]:
                best = (res, x.copy(), v.copy())
            if res <= tol:
                break
    res, x, v = best
    if H is not None and w:
        polished = _polish_l1(problem, x, H, g, w, proj)
        if polished is not None and kkt_residual(problem, *polished) < res:
            x, v = polished
            return finish(x, v, "mm+polish")
    return finish(x, v, "mm")


def proj_sigma2(A) -> float:
    s = np.linalg.svd(A, compute_uv=False)
    tol = max(A.shape) * s[0] * np.finfo(float).eps / 2
    return float(s[s > tol][-1] ** 2)


# ---------------------------------------------------------- dual functions

def dual_function(problem: ProblemSpec, v, rho: float = 0.0):
    """(q_rho(v), x_v) with x_v = argmin_x L_rho(x, v) for quadratic f.

    h = 0 uses a direct solve, h = w||.||_1 coordinate descent. Requires a
    positive definite H + rho A'A.
    """
    H = problem.f.hessian
    g = problem.f.linear
    c = getattr(problem.f, "constant", None)
    A, b = problem.A, problem.b
    K = H + rho * A.T @ A
    lin = g + A.T @ v - rho * A.T @ b
    w = l1_weight_of(problem.h)
    if w == 0.0:
        x = scipy.linalg.solve(K, -lin, assume_a="pos")
    elif w is not None:
        x = _cd_quad_l1(K, lin, w)
    else:
        raise ValueError("dual_function supports h = 0 and h = w||.||_1")
    r = A @ x - b
    val = problem.objective(x) + float(v @ r) + 0.5 * rho * float(r @ r)
    return val, x


# ---------------------------------------------------------- contraction checks

CONTRACTION_MODES = ("Lambda_shrink", "v_shrink", "v_shrink_1_over_1_plus_alpha")


@dataclass
class CheckReport:
    check: str
    status: str
    first_violation: Optional[int] = None
    margin: float = float("nan")
    instance_seed: Optional[int] = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, default=float, sort_keys=True)


def check_contraction(trace, alpha: float, mode: str, c_p: float = 0.0, c_d: float = 1.0,
                      slack: float = 1e-6, abs_floor: float = 0.0, check: Optional[str] = None,
                      instance_seed: Optional[int] = None) -> CheckReport:
    """Verify a linear-rate inequality along a trace.

    Lambda_shrink: Lam_{k+1} <= (1 - alpha) Lam_k, Lam = c_p/2 dx^2 + c_d/2 dv^2
    v_shrink: dv_k^2 <= (1 - alpha)^k dv_0^2
    v_shrink_1_over_1_plus_alpha: dv_k^2 <= (1 + alpha)^-k dv_0^2

    Right-hand sides are multiplied by ``1 + slack`` and ``abs_floor`` is
    added to absorb the error of the reference solution. ``margin`` is the
    smallest relative headroom (rhs - lhs) / rhs observed.
    """
    if mode not in CONTRACTION_MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if not 0 < alpha < 1 and mode != "v_shrink_1_over_1_plus_alpha":
        raise ValueError("alpha must lie in (0, 1)")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    dv = np.array([t.dist_v for t in trace], dtype=float)
    if mode == "Lambda_shrink":
        dx = np.array([t.dist_x for t in trace], dtype=float)
        seq = 0.5 * c_p * dx ** 2 + 0.5 * c_d * dv ** 2
    else:
        seq = dv ** 2
    if np.any(np.isnan(seq)):
        raise ValueError("trace lacks reference distances")
    first, margin = None, np.inf
    for k in range(1, len(seq)):
        if mode == "Lambda_shrink":
            rhs = (1 - alpha) * seq[k - 1]
        elif mode == "v_shrink":
            rhs = (1 - alpha) ** k * seq[0]
        else:
            rhs = (1 + alpha) ** (-k) * seq[0]
        bound = rhs * (1 + slack) + abs_floor
        if bound > 0:
            margin = min(margin, (bound - seq[k]) / bound)
        if seq[k] > bound and first is None:
            first = k
    return CheckReport(check or mode, "pass" if first is None else "fail", first,
                       float(margin), instance_seed)


def check_feasibility_decay(trace, alpha: float, rho: float, dist_v0: float, slack: float = 1e-6,
                            abs_floor: float = 0.0, instance_seed=None) -> CheckReport:
    """||A x^{k+1} - b||^2 <= (1 + alpha)^{-(k-1)} ||v^0 - v*||^2 / rho^2 for k >= 1."""
    first, margin = None, np.inf
    for rec in trace[2:]:
        k = rec.k - 1
        bound = (1 + alpha) ** (-(k - 1)) * dist_v0 ** 2 / rho ** 2 * (1 + slack) + abs_floor
        margin = min(margin, (bound - rec.feas_sq) / bound)
        if rec.feas_sq > bound and first is None:
            first = rec.k
    return CheckReport("feasibility_decay", "pass" if first is None else "fail", first,
                       float(margin), instance_seed)


def check_sublinear(values, fit_window: int = 10, factor: float = 10.0, check: str = "sublinear",
                    instance_seed=None) -> CheckReport:
    """Running averages (1/k) sum_{t<=k} a_t stay below factor * c / k, with
    c fitted as the largest k * avg_k over the first ``fit_window`` terms."""
    a = np.asarray(values, dtype=float)
    if a.size <= fit_window:
        raise ValueError("sequence shorter than the fit window")
    partial = np.cumsum(a)
    c = float(partial[:fit_window].max())
    first, margin = None, np.inf
    for k in range(fit_window, a.size):
        bound = factor * max(c, 1e-300)
        margin = min(margin, (bound - partial[k]) / bound)
        if partial[k] > bound and first is None:
            first = k + 1
    return CheckReport(check, "pass" if first is None else "fail", first, float(margin),
                       instance_seed, {"c": c})


# ---------------------------------------------------------- suites

def small_instance(seed: int, n: int = 8, m: int = 5, N: int = 12, lambda1: float = 0.0,
                   lambda2: float = 0.5, rank: Optional[int] = None) -> ProblemSpec:
    """Seeded least-squares instance; ``rank`` < m gives a rank-deficient A."""
    rng = np.random.default_rng(seed)
    P = rng.standard_normal((N, n))
    q = rng.standard_normal(N)
    if rank is not None and rank < m:
        A = rng.standard_normal((m, rank)) @ rng.standard_normal((rank, n))
    else:
        A = rng.standard_normal((m, n))
    x0 = rng.standard_normal(n)
    b = A @ x0
    f = LeastSquaresSmooth(P, q, N, lambda2)
    h = L1Regularizer(lambda1) if lambda1 > 0 else ZeroRegularizer()
    beta, mu = hessian_moduli(f.hessian)
    F0 = f(x0)[0] + h.value(x0)
    return ProblemSpec(f, h, A, b, lower_bound_f=0.0, upper_bound_q=F0, upper_bound_q_rho=F0,
                       beta=beta, mu=mu)


def suite_subqp(seed: int = 0, n_instances: int = 100) -> list[CheckReport]:
    """solve_bundle_qp against brute_force_qp on seeded instances."""
    reports = []
    for kind in ("zero", "l1"):
        worst, first = 0.0, None
        for i in range(n_instances):
            qp = random_qp(seed * 100003 + i, kind)
            res = solve_bundle_qp(qp)
            oracle = brute_force_qp(qp)
            err = abs(res.primal_obj - oracle.obj) / (1.0 + abs(oracle.obj))
            worst = max(worst, err)
            if err > 1e-7 and first is None:
                first = i
        reports.append(CheckReport(f"subqp_vs_bruteforce_{kind}", "pass" if first is None else "fail",
                                   first, 1.0 - worst / 1e-7, seed, {"worst_rel_err": float(worst)}))
    return reports


_MODEL_POLICIES = (Policy.POLYAK, Policy.CUTTING_PLANE, Policy.POLYAK_CUTTING_PLANE, Policy.TWO_CUT)


class _Violations:
    def __init__(self):
        self.counts: dict[str, int] = {}
        self.first: dict[str, tuple] = {}

    def check(self, name, ok, where):
        self.counts.setdefault(name, 0)
        if not ok:
            self.counts[name] += 1
            self.first.setdefault(name, where)


def model_suite_run(seed: int, policy: Policy, iters: int = 8, n_probes: int = 10,
                    tol: float = 1e-10, dual_tol: float = 1e-7) -> _Violations:
    """Model properties along BDA (primal and dual models) and BDA-D /
    BMM-D (dual mirror of the primal properties) runs on one instance."""
    policy = Policy(policy)
    rng = np.random.default_rng(10_000 + seed)
    rank = 3 if seed % 2 else None
    problem = small_instance(seed, lambda1=0.05 if seed % 3 == 0 else 0.0, rank=rank)
    A = problem.A
    proj = SubspaceProjectors(A)
    beta, mu = problem.beta, problem.mu
    spec = spectral_info(A, beta=beta, mu=mu)
    viol = _Violations()
    f = problem.f

    def probes(center, scale):
        return [center + s * rng.standard_normal(center.shape) for s in
                np.geomspace(1e-3, 1.0, n_probes) * scale]

    def rel(a):
        return tol * (1.0 + abs(a))

    # primal models and the BDA dual model
    def cb_bda(info):
        k = info.k
        pm, dm = info.primal_model, info.dual_model
        xk = info.x
        fx, gx = f(xk)
        viol.check("primal_anchor_exactness", abs(pm(xk) - fx) <= rel(fx), (seed, k))
        for p in probes(xk, 1.0 + np.linalg.norm(xk)):
            fp, gp = f(p)
            mp = pm(p)
            viol.check("primal_minorant", mp <= fp + rel(fp), (seed, k))
            lin = fx + gx @ (p - xk)
            viol.check("primal_linearization_dominance", mp >= lin - rel(lin), (seed, k))
            dist2 = float((p - xk) @ (p - xk))
            viol.check("primal_quadratic_upper_bound", fp <= mp + 0.5 * beta * dist2 + rel(fp), (seed, k))
            ghat = pm.subgradient(p)
            viol.check("primal_subgradient_bound",
                       np.linalg.norm(ghat - gp) <= beta * math.sqrt(dist2) + tol * (1 + np.linalg.norm(gp)),
                       (seed, k))
        for vp in probes(info.v, 1.0 + np.linalg.norm(info.v)):
            qv, _ = dual_function(problem, vp, 0.0)
            mv = dm(vp)
            viol.check("dual_majorant", mv >= qv - dual_tol * (1 + abs(qv)), (seed, k))
            cut = problem.objective(info.x) + float(vp @ (A @ info.x - problem.b))
            viol.check("dual_below_cut", mv <= cut + rel(cut), (seed, k))
            sg = dm.subgradient(vp)
            viol.check("dual_subgradient_in_range",
                       np.linalg.norm(proj.left_null(sg)) <= 1e-8 * (1 + np.linalg.norm(sg)), (seed, k))
        viol.check("dual_iterate_in_range",
                   np.linalg.norm(proj.left_null(info.v)) <= 1e-8 * (1 + np.linalg.norm(info.v)), (seed, k))

    c_p, c_d, _ = rate_params(spec, Method.BDA, safety=2.0)
    cfg = SolverConfig(Method.BDA, c_p=c_p, c_d=c_d, m_p=3, m_d=3, primal_policy=policy,
                       dual_policy=policy, max_iter=iters)
    run(problem, cfg, callback=cb_bda, keep_iterates=False)

    # dual mirror: exact primal steps make the dual cut a true linearization
    def make_cb(rho, smooth):
        def cb(info):
            k = info.k
            dm = info.dual_model
            vk = info.v_prev
            qk, xk = dual_function(problem, vk, rho)
            dtol = lambda a: dual_tol * (1 + abs(a))
            viol.check("dual_anchor_exactness", abs(dm(vk) - qk) <= dtol(qk), (seed, k, rho))
            gk = A @ xk - problem.b
            for vp in probes(vk, 1.0 + np.linalg.norm(vk)):
                qv, xv = dual_function(problem, vp, rho)
                mv = dm(vp)
                viol.check("dual_majorant", mv >= qv - dtol(qv), (seed, k, rho))
                lin = qk + gk @ (vp - vk)
                viol.check("dual_linearization_dominance", mv <= lin + dtol(lin), (seed, k, rho))
                dist2 = float((vp - vk) @ (vp - vk))
                viol.check("dual_quadratic_lower_bound", qv >= mv - 0.5 * smooth * dist2 - dtol(qv), (seed, k, rho))
                grad = A @ xv - problem.b
                sg = dm.subgradient(vp)
                viol.check("dual_subgradient_bound",
                           np.linalg.norm(sg - grad) <= smooth * math.sqrt(dist2)
                           + dual_tol * (1 + np.linalg.norm(grad)), (seed, k, rho))
                viol.check("dual_subgradient_in_range",
                           np.linalg.norm(proj.left_null(sg)) <= 1e-8 * (1 + np.linalg.norm(sg)),
                           (seed, k, rho))
            viol.check("dual_iterate_in_range",
                       np.linalg.norm(proj.left_null(info.v)) <= 1e-8 * (1 + np.linalg.norm(info.v)),
                       (seed, k, rho))
        return cb

    rho = 1.0
    cfg = SolverConfig(Method.BMM_D, c_d=1.0 / rho, rho=rho, m_d=3, dual_policy=policy, max_iter=iters,
                       exact_inner_tol=1e-13)
    run(problem, cfg, callback=make_cb(rho, 1.0 / rho), keep_iterates=False)
    _, c_d, _ = rate_params(spec, Method.BDA_D, safety=2.0)
    cfg = SolverConfig(Method.BDA_D, c_d=c_d, m_d=3, dual_policy=policy, max_iter=iters,
                       exact_inner_tol=1e-13)
    run(problem, cfg, callback=make_cb(0.0, spec.norm_A ** 2 / mu), keep_iterates=False)
    return viol


def suite_models(seed: int = 0, n_seeds: int = 50, **kw) -> list[CheckReport]:
    reports = []
    for policy in _MODEL_POLICIES:
        total: dict[str, int] = {}
        first: dict[str, tuple] = {}
        for s in range(seed, seed + n_seeds):
            v = model_suite_run(s, policy, **kw)
            for name, cnt in v.counts.items():
                total[name] = total.get(name, 0) + cnt
                if name in v.first:
                    first.setdefault(name, v.first[name])
        for name, cnt in sorted(total.items()):
            fv = first.get(name)
            reports.append(CheckReport(f"{name}[{policy.value}]", "pass" if cnt == 0 else "fail",
                                       None if fv is None else int(fv[0]), float(-cnt), seed,
                                       {"violations": cnt, "first": fv}))
    return reports


def rate_instance(seed: int, n: int = 30, m: int = 20, N: int = 40, lambda2: float = 1.0):
    """Strongly convex smooth instance (h = 0) with Hessian-based moduli."""
    problem = small_instance(seed, n=n, m=m, N=N, lambda1=0.0, lambda2=lambda2)
    spec = spectral_info(problem.A, beta=problem.beta, mu=problem.mu)
    return problem, spec


def rounding_floor(level: float, curvature: float, factor: float = 100.0) -> float:
    """Smallest meaningful squared distance for a cutting-plane iteration.

    Cut levels are stored in absolute terms (order |level|) and carry
    rounding eps*|level|; a model with curvature ``curvature`` cannot
    resolve its maximizer below d^2 ~ eps*|level|/curvature.
    """
    return factor * np.finfo(float).eps * (1.0 + abs(level)) / max(curvature, 1e-300)


def reference_floor(ref: ReferenceSolution, scale: float) -> float:
    # reference error enters squared distances quadratically
    return 100.0 * max(ref.kkt_residual, 1e-15) ** 2 * (1.0 + scale)


def suite_rates(seed: int = 0, iters_thm2: int = 200, iters_thm4: int = 200,
                iters_thm13: int = 100) -> list[CheckReport]:
    """Linear-rate statements on a strongly convex instance (and the
    sublinear metrics of BMM on a merely convex one)."""
    problem, spec = rate_instance(seed)
    ref = reference_solution(problem)
    reports = []
    beta, mu, s2 = spec.beta, spec.mu, spec.sigma_A ** 2
    F = ref.F_star
    dv0 = float(np.linalg.norm(ref.v_star))
    ref_floor = reference_floor(ref, dv0 ** 2)

    # BDA-D, c_d = 2||A||^2/mu; q is strongly concave on Range(A) with modulus sigma^2/beta
    _, c_d, alpha = rate_params(spec, Method.BDA_D, safety=2.0)
    floor = ref_floor + rounding_floor(F, s2 / beta)
    r = run(problem, SolverConfig(Method.BDA_D, c_d=c_d, m_d=5, max_iter=iters_thm2,
                                  exact_inner_tol=1e-13), reference=ref, keep_iterates=False)
    reports.append(check_contraction(r.trace, alpha, "v_shrink", abs_floor=floor,
                                     check="dual_rate_v_shrink", instance_seed=seed))

    # BMM-D, rho = 1, c_d = 1/rho; q_rho has modulus 1/(beta/sigma^2 + rho) on Range(A)
    rho = 1.0
    c_d = 1.0 / rho
    alpha = rate_alpha(spec, Method.BMM_D, 0.0, c_d, rho)
    floor = ref_floor + rounding_floor(F, 1.0 / (beta / s2 + rho))
    r = run(problem, SolverConfig(Method.BMM_D, c_d=c_d, rho=rho, m_d=5, max_iter=iters_thm4,
                                  exact_inner_tol=1e-13), reference=ref, keep_iterates=False)
    reports.append(check_contraction(r.trace, alpha, "v_shrink_1_over_1_plus_alpha", abs_floor=floor,
                                     check="aug_dual_rate_v_shrink", instance_seed=seed))
    reports.append(check_feasibility_decay(r.trace, alpha, rho, dv0, abs_floor=floor * s2,
                                           instance_seed=seed))

    # Lambda contraction for BDA and BMM (strongly convex case)
    for method, rho in ((Method.BDA, 0.0), (Method.BMM, 1.0)):
        c_p, c_d, alpha = rate_params(spec, method, rho=rho, safety=2.0)
        kappa_d = s2 / beta if rho == 0 else 1.0 / (beta / s2 + rho)
        for m_b in (1, 5):
            r = run(problem, SolverConfig(method, c_p=c_p, c_d=c_d, rho=rho, m_p=m_b, m_d=m_b,
                                          max_iter=iters_thm13), reference=ref, keep_iterates=False)
            floor = (0.5 * c_p * (rounding_floor(F, mu) + reference_floor(ref, 0.0))
                     + 0.5 * c_d * (rounding_floor(F, kappa_d) + ref_floor))
            reports.append(check_contraction(r.trace, alpha, "Lambda_shrink", c_p=c_p, c_d=c_d,
                                             abs_floor=floor,
                                             check=f"{'joint' if rho == 0 else 'aug_joint'}_rate_Lambda_m{m_b}",
                                             instance_seed=seed))

    # sublinear BMM metrics on a merely convex instance
    convex = small_instance(seed, n=30, m=20, N=20, lambda1=0.0, lambda2=0.0)
    beta = convex.beta
    rho = 1.0
    r = run(convex, SolverConfig(Method.BMM, c_p=2.0 * beta, c_d=2.0 / rho, rho=rho, m_p=5, m_d=5,
                                 max_iter=200), keep_iterates=False)
    pn = [t.pn_grad ** 2 for t in r.trace[1:]]
    feas = [t.feas_sq for t in r.trace[1:]]
    reports.append(check_sublinear(pn, check="aug_sublinear_pn_grad_avg", instance_seed=seed))
    reports.append(check_sublinear(feas, check="aug_sublinear_feas_avg", instance_seed=seed))
    return reports


SPECIALIZATIONS = ((Method.BDA, Method.PDG, 0.0), (Method.BMM, Method.LinMM, 1.0),
                   (Method.BDA_D, Method.DA, 0.0), (Method.BMM_D, Method.MM, 1.0))


def specialization_gap(problem: ProblemSpec, bundle: Method, baseline: Method, rho: float = 0.0,
                       iters: int = 50) -> float:
    """Largest per-iterate l-infinity difference between a single-cut bundle
    method and its closed-form baseline, over primal and dual iterates."""
    spec = spectral_info(problem.A, beta=problem.beta, mu=problem.mu)
    c_p, c_d, _ = rate_params(spec, bundle, rho=rho, safety=2.0)
    traces = []
    for method in (bundle, baseline):
        cfg = SolverConfig(method, c_p=c_p, c_d=c_d, rho=rho, m_p=1, m_d=1, max_iter=iters,
                           exact_inner_tol=1e-13)
        traces.append(run(problem, cfg).trace)
    if len(traces[0]) != len(traces[1]):
        return float("inf")
    return max(max(float(np.max(np.abs(a.x - b.x))), float(np.max(np.abs(a.v - b.v))))
               for a, b in zip(*traces))


def suite_equivalence(seed: int = 0, n_instances: int = 10, iters: int = 50,
                      tol: float = 1e-9) -> list[CheckReport]:
    """Single-cut bundle methods against their baselines on smooth
    strongly convex instances."""
    reports = []
    for bundle, baseline, rho in SPECIALIZATIONS:
        worst, first = 0.0, None
        for i in range(n_instances):
            problem = small_instance(seed * 1000 + i, n=10, m=6, N=14)
            gap = specialization_gap(problem, bundle, baseline, rho, iters)
            worst = max(worst, gap)
            if gap > tol and first is None:
                first = i
        reports.append(CheckReport(f"{bundle.value}_vs_{baseline.value}",
                                   "pass" if first is None else "fail", first,
                                   (tol - worst) / tol, seed, {"max_gap": worst}))
    return reports


SUITES = {"subqp": suite_subqp, "models": suite_models, "rates": suite_rates,
          "equivalence": suite_equivalence}


def run_suite(name: str, seed: int = 0) -> list[CheckReport]:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}")
    return SUITES[name](seed)
