"""Primal-dual bundle iterations.

One loop covers eight methods::

    BDA    bundle primal step, bundle dual step              (rho = 0)
    BDA_D  exact primal step,  bundle dual step              (rho = 0)
    BMM    bundle primal step on L_rho, bundle dual step     (rho > 0)
    BMM_D  exact primal step on L_rho,  bundle dual step     (rho > 0)
    PDG    primal-dual gradient (closed form)
    DA     dual ascent
    LinMM  linearized method of multipliers
    MM     method of multipliers

Each iteration runs primal step -> dual cut at the new primal point ->
dual step -> primal cut at the new primal point.
"""

from __future__ import annotations

import dataclasses
import enum
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from . import kernels
from .core import ProblemSpec, SpectralInfo, SubspaceProjectors, ZeroRegularizer, l1_weight_of
from .models import BundleModel, Cut, Orientation, Policy
from .subqp import SubproblemQP, solve_bundle_qp


class Method(str, enum.Enum):
    BDA = "BDA"
    BDA_D = "BDA-D"
    BMM = "BMM"
    BMM_D = "BMM-D"
    PDG = "PDG"
    DA = "DA"
    LinMM = "LinMM"
    MM = "MM"

    @classmethod
    def parse(cls, name) -> "Method":
        if isinstance(name, cls):
            return name
        key = str(name).replace("_", "-").upper()
        for m in cls:
            if m.value.upper() == key:
                return m
        raise ValueError(f"unknown method {name!r}")


_EXACT_PRIMAL = {Method.BDA_D, Method.BMM_D, Method.DA, Method.MM}
_AUGMENTED = {Method.BMM, Method.BMM_D, Method.LinMM, Method.MM}
_BUNDLE_PRIMAL = {Method.BDA, Method.BMM}
_BUNDLE_DUAL = {Method.BDA, Method.BDA_D, Method.BMM, Method.BMM_D}

# which linear-rate statement covers each method
RATE_REGIME = {Method.BDA: "joint", Method.PDG: "joint", Method.BDA_D: "dual", Method.DA: "dual",
               Method.BMM: "aug_joint", Method.LinMM: "aug_joint", Method.BMM_D: "aug_dual", Method.MM: "aug_dual"}


@dataclass(frozen=True)
class SolverConfig:
    method: Method
    c_p: float = 0.0
    c_d: float = 1.0
    rho: float = 0.0
    m_p: int = 1
    m_d: int = 1
    primal_policy: Policy = Policy.CUTTING_PLANE
    dual_policy: Policy = Policy.CUTTING_PLANE
    max_iter: int = 100
    stop_tol: float = 0.0
    subqp_tol: float = 1e-12
    subqp_max_iter: int = 20000
    inner_tol: float = 1e-12
    exact_inner_tol: float = 1e-10
    exact_inner_max: int = 200000
    diverge_tol: float = 1e12

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        object.__setattr__(self, "primal_policy", Policy(self.primal_policy))
        object.__setattr__(self, "dual_policy", Policy(self.dual_policy))

    def validated(self) -> "SolverConfig":
        """Normalized copy; raises ValueError on inconsistent settings."""
        m = self.method
        changes = {}
        if m in _AUGMENTED:
            if not self.rho > 0:
                raise ValueError(f"{m.value} requires rho > 0")
        elif self.rho != 0:
            raise ValueError(f"{m.value} requires rho = 0")
        if m in _EXACT_PRIMAL:
            changes["c_p"] = 0.0
        elif not self.c_p > 0:
            raise ValueError(f"{m.value} requires c_p > 0")
        if not self.c_d > 0:
            raise ValueError("c_d must be positive")
        if m not in _BUNDLE_PRIMAL:
            changes.update(m_p=1, primal_policy=Policy.SINGLE_CUT)
        if m not in _BUNDLE_DUAL:
            changes.update(m_d=1, dual_policy=Policy.SINGLE_CUT)
        if self.m_p < 1 or self.m_d < 1:
            raise ValueError("bundle sizes must be >= 1")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")
        return dataclasses.replace(self, **changes)

    @property
    def exact_primal(self) -> bool:
        return self.method in _EXACT_PRIMAL

    @property
    def bundle_primal(self) -> bool:
        return self.method in _BUNDLE_PRIMAL

    @property
    def bundle_dual(self) -> bool:
        return self.method in _BUNDLE_DUAL


@dataclass
class TraceRecord:
    k: int
    obj: float
    obj_gap: float
    f_gap: float
    feas_sq: float
    residual: float
    pn_grad: float
    dist_x: float
    dist_v: float
    inner_iters_primal: int
    inner_iters_dual: int
    wall_ns: int
    inner_ok: bool = True
    x: Optional[np.ndarray] = field(default=None, repr=False)
    v: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass
class SolverState:
    x: np.ndarray
    v: np.ndarray
    primal_model: Optional[BundleModel]
    dual_model: Optional[BundleModel]
    k: int = 0
    primal_lambda: Optional[np.ndarray] = None
    primal_sources: list = field(default_factory=list)
    dual_lambda: Optional[np.ndarray] = None
    dual_sources: list = field(default_factory=list)


@dataclass
class RunResult:
    trace: list
    x: np.ndarray
    v: np.ndarray
    status: str
    config: SolverConfig

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"

    @property
    def final(self) -> TraceRecord:
        return self.trace[-1]


@dataclass
class PrimalStep:
    x: np.ndarray
    weights: Optional[np.ndarray]
    inner_iters: int
    converged: bool
    h_subgradient: np.ndarray
    sources: list = field(default_factory=list)


class _Workspace:
    """Per-run cached matrices (A'A, factorizations, spectra)."""

    def __init__(self, problem: ProblemSpec, config: SolverConfig):
        self.problem = problem
        self.config = config
        A, b = problem.A, problem.b
        self.At_b = A.T @ b
        self.w = l1_weight_of(problem.h)
        rho = config.rho
        self._bmm_C = None
        self._exact = None
        if rho > 0 and config.method in (Method.BMM, Method.LinMM):
            AtA = A.T @ A
            ev = np.linalg.eigvalsh(AtA)
            C = config.c_p * np.eye(problem.n) + rho * AtA
            self._bmm_C = dict(C=np.ascontiguousarray(C), c_min=config.c_p + rho * max(ev[0], 0.0),
                               c_max=config.c_p + rho * ev[-1],
                               factor=scipy.linalg.cho_factor(C))
        if config.exact_primal:
            self._exact = _ExactPrimal(problem, rho, config.exact_inner_tol, config.exact_inner_max)

    @property
    def bmm_C(self):
        return self._bmm_C

    @property
    def exact(self):
        return self._exact


class _ExactPrimal:
    """argmin_x L_rho(x, v) for the exact-primal methods."""

    def __init__(self, problem: ProblemSpec, rho: float, tol: float, max_iter: int):
        self.problem = problem
        self.rho = rho
        self.tol = tol
        self.max_iter = max_iter
        self.w = l1_weight_of(problem.h)
        A = problem.A
        H = getattr(problem.f, "hessian", None)
        g = getattr(problem.f, "linear", None)
        self.quadratic = H is not None and g is not None
        if self.quadratic:
            K = np.ascontiguousarray(H + rho * (A.T @ A))
            ev = np.linalg.eigvalsh(K)
            self.K, self.g = K, np.asarray(g, dtype=float)
            self.L = float(ev[-1])
            self.mu = float(ev[0]) if ev[0] > 1e-12 * ev[-1] else 0.0
            self.factor = scipy.linalg.cho_factor(K) if self.mu > 0 else None
        else:
            norm_A2 = float(np.linalg.norm(A, 2)) ** 2
            beta = problem.beta if problem.beta else 1.0
            self.L = beta + rho * norm_A2
            self.mu = problem.mu or 0.0

    def solve(self, v, x_warm):
        """Returns (x, inner_iterations, converged)."""
        p = self.problem
        A, b, rho = p.A, p.b, self.rho
        if self.quadratic:
            lin = self.g + A.T @ v - rho * (A.T @ b)
            if self.w == 0.0:
                if self.factor is not None:
                    return scipy.linalg.cho_solve(self.factor, -lin), 0, True
                x = np.linalg.lstsq(self.K, -lin, rcond=None)[0]
                return x, 0, False
            if self.w is not None:
                x, its, _, ok = kernels.apg_quad_l1(self.K, lin, self.w, np.asarray(x_warm, float),
                                                    self.L, self.mu, self.tol, self.max_iter)
                return x, int(its), bool(ok)
        return self._generic(v, x_warm)

    def _generic(self, v, x0):
        p = self.problem
        A, b, rho = p.A, p.b, self.rho
        L = self.L

        def smooth(x):
            fx, gx = p.f(x)
            r = A @ x - b
            return fx + v @ r + 0.5 * rho * r @ r, gx + A.T @ (v + rho * r)

        x = np.array(x0, dtype=float)
        y = x.copy()
        t = 1.0
        for it in range(1, self.max_iter + 1):
            fy, gy = smooth(y)
            while True:
                x_new = p.h.prox(y - gy / L, 1.0 / L)
                dx = x_new - y
                if smooth(x_new)[0] <= fy + gy @ dx + 0.5 * L * dx @ dx + 1e-12 * abs(fy):
                    break
                L *= 2.0
            if L * np.linalg.norm(dx) <= self.tol * (1.0 + np.linalg.norm(gy)):
                self.L = L
                return x_new, it, True
            t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
            mom = (t - 1) / t_new
            t = t_new
            if np.dot(y - x_new, x_new - x) > 0:
                mom, t = 0.0, 1.0
            y = x_new + mom * (x_new - x)
            x = x_new
        self.L = L
        return x, self.max_iter, False


def _new_models(problem: ProblemSpec, config: SolverConfig):
    primal = dual = None
    if config.bundle_primal:
        primal = BundleModel(config.primal_policy, config.m_p, problem.lower_bound_f
                             if config.primal_policy in (Policy.POLYAK, Policy.POLYAK_CUTTING_PLANE)
                             else None, Orientation.PRIMAL)
    if config.bundle_dual:
        bound = problem.bound_for_dual(config.rho)
        dual = BundleModel(config.dual_policy, config.m_d, bound
                           if config.dual_policy in (Policy.POLYAK, Policy.POLYAK_CUTTING_PLANE)
                           else None, Orientation.DUAL)
    return primal, dual


def primal_step(problem: ProblemSpec, state: SolverState, config: SolverConfig,
                workspace: Optional[_Workspace] = None) -> PrimalStep:
    """Compute x^{k+1} from (x^k, v^k) and the primal model."""
    ws = workspace or _Workspace(problem, config)
    A, b = problem.A, problem.b
    x, v = state.x, state.v
    rho, c_p = config.rho, config.c_p
    m = config.method
    zero_h = isinstance(problem.h, ZeroRegularizer) or ws.w == 0.0

    if m in _EXACT_PRIMAL:
        x_new, its, ok = ws.exact.solve(v, x)
        if zero_h:
            s = np.zeros_like(x_new)
        else:
            r = A @ x_new - b
            s = -(problem.f(x_new)[1] + A.T @ (v + rho * r))
        return PrimalStep(x_new, None, its, ok, s)

    if m is Method.PDG:
        _, g = problem.f(x)
        u = g + A.T @ v
        x_new = problem.h.prox(x - u / c_p, 1.0 / c_p)
        s = np.zeros_like(x_new) if zero_h else c_p * (x - x_new) - u
        return PrimalStep(x_new, None, 0, True, s)

    if m is Method.LinMM:
        _, g = problem.f(x)
        C = ws.bmm_C
        lin = g - c_p * x + A.T @ v - rho * ws.At_b
        if ws.w == 0.0:
            x_new, its, ok = scipy.linalg.cho_solve(C["factor"], -lin), 0, True
        elif ws.w is not None:
            x_new, its, _, ok = kernels.apg_quad_l1(C["C"], lin, ws.w, x.copy(), C["c_max"],
                                                    C["c_min"], config.inner_tol, config.exact_inner_max)
        else:
            qp = SubproblemQP(g[None, :], np.zeros(1), C["C"], lin - g, problem.h,
                              c_min=C["c_min"], c_max=C["c_max"], C_factor=C["factor"])
            res = solve_bundle_qp(qp, warm_x=x, inner_tol=config.inner_tol)
            x_new, its, ok = res.x_star, res.inner_iterations, res.converged
        s = np.zeros_like(x_new) if zero_h else -(C["C"] @ x_new + lin)
        return PrimalStep(x_new, None, int(its), bool(ok), s)

    # bundle primal step (BDA, BMM)
    model = state.primal_model
    At, bt, _, _ = model.export_cuts()
    d = A.T @ v - c_p * x
    if m is Method.BMM:
        C = ws.bmm_C
        d = d - rho * ws.At_b
        qp = SubproblemQP(At, bt, C["C"], d, problem.h, c_min=C["c_min"], c_max=C["c_max"],
                          C_factor=C["factor"])
    else:
        qp = SubproblemQP(At, bt, c_p, d, problem.h)
    warm = model.warm_weights(state.primal_sources, state.primal_lambda)
    res = solve_bundle_qp(qp, tol=config.subqp_tol, max_iter=config.subqp_max_iter,
                          warm_lambda=warm, warm_x=x, inner_tol=config.inner_tol)
    x_new = res.x_star
    if zero_h:
        s = np.zeros_like(x_new)
    else:
        s = -(At.T @ res.lambda_star + qp.apply_C(x_new) + d)
    return PrimalStep(x_new, res.lambda_star, res.iterations + res.inner_iterations,
                      res.converged, s, model.source_indices)


def make_dual_cut(problem: ProblemSpec, x_next, v, rho: float, F_next: Optional[float] = None,
                  source_index: int = 0) -> Cut:
    """Affine function of v: L_rho(x_next, .), i.e. slope A x_next - b and
    offset F(x_next) + (rho/2)||A x_next - b||^2.
    """
    r = problem.A @ x_next - problem.b
    F = problem.objective(x_next) if F_next is None else F_next
    return Cut(r, float(F + 0.5 * rho * (r @ r)), source_index)


def dual_step(state: SolverState, config: SolverConfig, residual=None):
    """Compute v^{k+1}. Returns (v_next, weights, inner_iterations, converged).

    ``residual`` (A x^{k+1} - b) drives the closed-form single-cut step.
    """
    v = state.v
    if not config.bundle_dual:
        return v + residual / config.c_d, None, 0, True
    model = state.dual_model
    At, bt, _, _ = model.export_cuts()
    qp = SubproblemQP(At, bt, config.c_d, -config.c_d * v)
    warm = model.warm_weights(state.dual_sources, state.dual_lambda)
    res = solve_bundle_qp(qp, tol=config.subqp_tol, max_iter=config.subqp_max_iter,
                          warm_lambda=warm)
    return res.x_star, res.lambda_star, res.iterations, res.converged


@dataclass
class IterationInfo:
    """Passed to the ``run`` callback after each completed iteration.

    ``dual_model`` was built at the anchor ``v_prev`` from the cut at ``x``;
    ``primal_model`` is anchored at ``x``.
    """

    k: int
    x_prev: np.ndarray
    v_prev: np.ndarray
    x: np.ndarray
    v: np.ndarray
    primal_model: Optional[BundleModel]
    dual_model: Optional[BundleModel]


def run(problem: ProblemSpec, config: SolverConfig, reference=None, x0=None,
        keep_iterates: bool = True, callback=None) -> RunResult:
    """Run one method for ``config.max_iter`` iterations (or until the
    stopping rule or divergence guard fires).

    ``reference`` is any object with ``x_star``, ``v_star`` and ``F_star``
    (see ``verify.reference_solution``); it enables the gap and distance
    columns of the trace. ``callback`` receives an ``IterationInfo`` after
    every iteration.
    """
    config = config.validated()
    n, m = problem.n, problem.m
    A, b = problem.A, problem.b
    ws = _Workspace(problem, config)
    proj = SubspaceProjectors(A)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    v = np.zeros(m)
    primal_model, dual_model = _new_models(problem, config)
    state = SolverState(x=x, v=v, primal_model=primal_model, dual_model=dual_model)

    fx, gx = problem.f(x)
    if primal_model is not None:
        primal_model.observe(x, fx, gx, source_index=0)

    if reference is not None:
        x_star, v_star, F_star = reference.x_star, reference.v_star, reference.F_star
        f_star = problem.f(x_star)[0]
    t0 = time.perf_counter_ns()
    zero_h = l1_weight_of(problem.h) == 0.0

    def record(k, x, v, fx, gx, s, it_p, it_d, ok):
        F = fx + problem.h.value(x)
        r = A @ x - b
        feas = float(r @ r)
        if s is None:
            pn = float(np.linalg.norm(proj.null(gx))) if zero_h else float("nan")
        else:
            pn = float(np.linalg.norm(proj.null(gx + s)))
        if reference is not None:
            gap = abs(F - F_star)
            fgap = abs(fx - f_star)
            dx = float(np.linalg.norm(x - x_star))
            dv = float(np.linalg.norm(v - v_star))
            resid = gap + feas
        else:
            gap = fgap = dx = dv = resid = float("nan")
        return TraceRecord(k=k, obj=F, obj_gap=gap, f_gap=fgap, feas_sq=feas, residual=resid,
                           pn_grad=pn, dist_x=dx, dist_v=dv, inner_iters_primal=int(it_p),
                           inner_iters_dual=int(it_d), wall_ns=time.perf_counter_ns() - t0,
                           inner_ok=bool(ok), x=x.copy() if keep_iterates else None,
                           v=v.copy() if keep_iterates else None)

    trace = [record(0, x, v, fx, gx, None, 0, 0, True)]
    status = "max_iter"
    for k in range(config.max_iter):
        state.k = k
        try:
            step = primal_step(problem, state, config, ws)
            x_new = step.x
            if not np.all(np.isfinite(x_new)):
                raise FloatingPointError
            f_new, g_new = problem.f(x_new)
            F_new = f_new + problem.h.value(x_new)
            r_new = A @ x_new - b
            if dual_model is not None:
                cut_value = F_new + float(v @ r_new) + 0.5 * config.rho * float(r_new @ r_new)
                dual_model.observe(v, cut_value, r_new, weights=state.dual_lambda, source_index=k)
            v_new, lam_d, it_d, ok_d = dual_step(state, config, residual=r_new)
            if not np.all(np.isfinite(v_new)) or not np.isfinite(F_new):
                raise FloatingPointError
            if dual_model is not None:
                state.dual_lambda, state.dual_sources = lam_d, dual_model.source_indices
            if primal_model is not None:
                primal_model.observe(x_new, f_new, g_new, weights=step.weights, source_index=k + 1)
                state.primal_lambda, state.primal_sources = step.weights, step.sources
        except (FloatingPointError, np.linalg.LinAlgError, ValueError, OverflowError):
            status = "diverged"
            break
        dx_sq = float((x_new - x) @ (x_new - x))
        if callback is not None:
            callback(IterationInfo(k, x, v, x_new, v_new, primal_model, dual_model))
        x, v = x_new, v_new
        state.x, state.v = x, v
        rec = record(k + 1, x, v, f_new, g_new, step.h_subgradient, step.inner_iters, it_d,
                     step.converged and ok_d)
        trace.append(rec)
        if (not np.isfinite(rec.obj) or rec.feas_sq > config.diverge_tol
                or abs(rec.obj) > config.diverge_tol):
            status = "diverged"
            break
        if config.stop_tol > 0:
            crit = rec.residual if reference is not None else rec.feas_sq + config.c_p * dx_sq
            if crit <= config.stop_tol:
                status = "converged"
                break
    return RunResult(trace=trace, x=x, v=v, status=status, config=config)


# ------------------------------------------------------------ parameter rules

_MARGIN = 1e-12


def rate_params(spectral: SpectralInfo, method, rho: float = 0.0, safety: float = 2.0):
    """Step-size parameters c = safety * threshold from the convergence
    conditions, plus the predicted contraction constant alpha.

    Returns (c_p, c_d, alpha). ``alpha`` is None when the linear-rate
    statement does not apply (BMM without strong convexity).
    """
    m = Method.parse(method)
    th = RATE_REGIME[m]
    beta, mu = spectral.beta, spectral.mu
    nA2, sA2 = spectral.norm_A ** 2, spectral.sigma_A ** 2
    strict = th != "aug_dual"
    if safety < 1.0 or (strict and safety <= 1.0 + _MARGIN):
        raise ValueError("safety factor must exceed 1 (strict step-size conditions)")
    if th in ("joint", "dual") and mu <= 0:
        raise ValueError("strong convexity required")
    if th in ("aug_joint", "aug_dual") and not rho > 0:
        raise ValueError("rho > 0 required")
    if th == "joint":
        c_p = safety * 2 * beta ** 2 / mu
        c_d = safety * 2 * nA2 / mu
        alpha = sA2 / (6 * c_d * c_p) * min(1 - 2 * beta ** 2 / (mu * c_p), 1 - 2 * nA2 / (mu * c_d))
    elif th == "dual":
        c_p = 0.0
        c_d = safety * nA2 / mu
        alpha = sA2 / (beta ** 2 * c_d) * (mu - nA2 / c_d)
    elif th == "aug_joint":
        c_p = safety * (max(beta, 2 * beta ** 2 / mu) if mu > 0 else beta)
        c_d = safety / rho
        if mu > 0:
            alpha = (min(1 - 2 * beta ** 2 / (mu * c_p), 1 - 1 / (rho * c_d))
                     / (5 * c_p * c_d * (1 / sA2 + rho / mu)))
        else:
            alpha = None
    else:
        c_p = 0.0
        c_d = safety / rho
        alpha = _aug_dual_alpha(spectral, rho, c_d)
    return c_p, c_d, alpha


def _aug_dual_alpha(spectral: SpectralInfo, rho: float, c_d: float) -> float:
    return min(spectral.sigma_A ** 2 / spectral.beta, 1.0 / rho) / (2 * c_d)


def rate_alpha(spectral: SpectralInfo, method, c_p: float, c_d: float, rho: float = 0.0):
    """alpha of the linear-rate statement for given parameters (None if the
    parameters violate the rate conditions)."""
    th = RATE_REGIME[Method.parse(method)]
    beta, mu = spectral.beta, spectral.mu
    nA2, sA2 = spectral.norm_A ** 2, spectral.sigma_A ** 2
    if th == "joint":
        if mu <= 0 or c_p <= 2 * beta ** 2 / mu * (1 + _MARGIN) or c_d <= 2 * nA2 / mu * (1 + _MARGIN):
            return None
        return sA2 / (6 * c_d * c_p) * min(1 - 2 * beta ** 2 / (mu * c_p), 1 - 2 * nA2 / (mu * c_d))
    if th == "dual":
        if mu <= 0 or c_d <= nA2 / mu * (1 + _MARGIN):
            return None
        return sA2 / (beta ** 2 * c_d) * (mu - nA2 / c_d)
    if th == "aug_joint":
        if (mu <= 0 or rho <= 0 or c_p <= max(beta, 2 * beta ** 2 / mu) * (1 + _MARGIN)
                or c_d <= (1 + _MARGIN) / rho):
            return None
        return (min(1 - 2 * beta ** 2 / (mu * c_p), 1 - 1 / (rho * c_d))
                / (5 * c_p * c_d * (1 / sA2 + rho / mu)))
    if rho <= 0 or c_d < (1 - _MARGIN) / rho:
        return None
    return _aug_dual_alpha(spectral, rho, c_d)
