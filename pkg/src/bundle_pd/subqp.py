"""Bundle subproblems

    minimize_x  max_i (a_i'x + b_i) + 0.5 x'Cx + d'x + h(x)

solved through their dual over the probability simplex. For simplex weights
lam the inner minimizer x_lam has a closed form (diagonal C) or is the
solution of a strongly convex l1/quadratic problem (dense C); the dual
gradient is A_tilde x_lam + b_tilde.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.linalg

from . import kernels
from .core import ZeroRegularizer, l1_weight_of

DEFAULT_TOL = 1e-9
DEFAULT_INNER_TOL = 1e-10
DEFAULT_MAX_ITER = 20000
DEFAULT_INNER_MAX = 20000


def prox_l1(y, t: float) -> np.ndarray:
    """Soft-threshold: argmin_x t ||x||_1 + 0.5 ||x - y||^2."""
    if t <= 0:
        raise ValueError("threshold must be positive")
    return kernels.soft_threshold(np.asarray(y, dtype=float), float(t))


def project_simplex(y) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.size == 0:
        raise ValueError("cannot project an empty vector")
    return kernels.project_simplex(y)


@dataclass
class SubproblemQP:
    """Data of one bundle subproblem.

    ``C`` is either a positive scalar c (meaning c I) or a dense symmetric
    positive definite matrix. ``c_min``/``c_max`` bound its spectrum and are
    computed when omitted. ``C_factor`` may carry a Cholesky factorization
    of a dense C so repeated subproblems with the same C reuse it.
    """

    A_tilde: np.ndarray
    b_tilde: np.ndarray
    C: Union[float, np.ndarray]
    d: np.ndarray
    h: object = field(default_factory=ZeroRegularizer)
    c_min: Optional[float] = None
    c_max: Optional[float] = None
    C_factor: object = None
    lipschitz_dual: Optional[float] = None

    def __post_init__(self):
        self.A_tilde = np.atleast_2d(np.asarray(self.A_tilde, dtype=float))
        self.b_tilde = np.atleast_1d(np.asarray(self.b_tilde, dtype=float))
        self.d = np.atleast_1d(np.asarray(self.d, dtype=float))
        M, n = self.A_tilde.shape
        if M < 1:
            raise ValueError("subproblem needs at least one cut")
        if self.b_tilde.shape != (M,) or self.d.shape != (n,):
            raise ValueError("inconsistent subproblem dimensions")
        if np.ndim(self.C) == 0:
            self.C = float(self.C)
            if self.C <= 0:
                raise ValueError("C must be positive definite")
            self.c_min = self.c_max = self.C
        else:
            self.C = np.ascontiguousarray(self.C, dtype=float)
            if self.C.shape != (n, n):
                raise ValueError("C must be n x n")
            if self.c_min is None or self.c_max is None:
                ev = np.linalg.eigvalsh(self.C)
                self.c_min = float(ev[0]) if self.c_min is None else self.c_min
                self.c_max = float(ev[-1]) if self.c_max is None else self.c_max
            if self.c_min <= 0:
                raise ValueError("C must be positive definite")
        # rows shifted by their mean: identical on the simplex, better conditioned
        self._shift = self.A_tilde.mean(axis=0)
        self._At_c = np.ascontiguousarray(self.A_tilde - self._shift)
        self._d_c = self.d + self._shift
        if self.lipschitz_dual is None:
            # exact constant lambda_max(A_c C^{-1} A_c'); x_lam is a prox in
            # the C-metric so this also holds with a regularizer
            if M == 1:
                top = 0.0
            elif self.dense:
                gram = self._At_c @ self.solve_C(self._At_c.T)
                top = float(np.linalg.eigvalsh(0.5 * (gram + gram.T))[-1])
            else:
                top = float(np.linalg.eigvalsh(self._At_c @ self._At_c.T)[-1]) / self.C
            self.lipschitz_dual = max(top, 1e-300)

    @property
    def M(self) -> int:
        return self.A_tilde.shape[0]

    @property
    def n(self) -> int:
        return self.A_tilde.shape[1]

    @property
    def dense(self) -> bool:
        return not isinstance(self.C, float)

    def apply_C(self, x):
        return self.C * x if not self.dense else self.C @ x

    def solve_C(self, rhs):
        if not self.dense:
            return rhs / self.C
        if self.C_factor is None:
            self.C_factor = scipy.linalg.cho_factor(self.C)
        return scipy.linalg.cho_solve(self.C_factor, rhs)

    def primal_objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        s = self.A_tilde @ x + self.b_tilde
        return float(s.max() + 0.5 * x @ self.apply_C(x) + self.d @ x + self.h.value(x))

    def dual_objective(self, lam, x=None) -> float:
        """g(lam); ``x`` may pass a precomputed x_lam."""
        lam = np.asarray(lam, dtype=float)
        if x is None:
            x = x_from_lambda(self, lam)
        s = self.A_tilde @ x + self.b_tilde
        return float(self.h.value(x) + 0.5 * x @ self.apply_C(x) + self.d @ x + lam @ s)


@dataclass
class QPResult:
    x_star: np.ndarray
    lambda_star: np.ndarray
    dual_obj: float
    primal_obj: float
    iterations: int
    inner_iterations: int
    converged: bool

    @property
    def gap(self) -> float:
        return self.primal_obj - self.dual_obj

    def __iter__(self):
        # tuple-style unpacking: x, lam, dual, primal
        return iter((self.x_star, self.lambda_star, self.dual_obj, self.primal_obj))


def _inner_dense_generic(qp, lin, x0, tol, max_iter):
    """APG on 0.5 x'Cx + lin'x + h(x) for an arbitrary prox-able h."""
    L, mu = qp.c_max, qp.c_min
    step = 1.0 / L
    sq = np.sqrt(mu / L)
    mom = (1 - sq) / (1 + sq)
    scale = tol * (1.0 + np.linalg.norm(lin))
    x = x0.copy()
    y = x0.copy()
    for it in range(1, max_iter + 1):
        x_new = qp.h.prox(y - step * (qp.C @ y + lin), step)
        if L * np.linalg.norm(x_new - y) <= scale:
            return x_new, it, True
        beta = 0.0 if np.dot(y - x_new, x_new - x) > 0 else mom
        y = x_new + beta * (x_new - x)
        x = x_new
    return x, max_iter, False


def _x_from_lambda(qp: SubproblemQP, lam, x_warm=None, inner_tol=DEFAULT_INNER_TOL,
                   inner_max=DEFAULT_INNER_MAX):
    lin = qp._d_c + qp._At_c.T @ lam
    w = l1_weight_of(qp.h)
    if not qp.dense:
        if w == 0.0:
            return -lin / qp.C, 0, True
        if w is not None:
            return kernels.soft_threshold(-lin / qp.C, w / qp.C), 0, True
        return qp.h.prox(-lin / qp.C, 1.0 / qp.C), 0, True
    if w == 0.0:
        return qp.solve_C(-lin), 0, True
    x0 = np.zeros(qp.n) if x_warm is None else np.asarray(x_warm, dtype=float)
    if w is not None:
        x, its, _, ok = kernels.apg_quad_l1(qp.C, lin, w, x0, qp.c_max, qp.c_min,
                                            inner_tol, inner_max)
        return x, int(its), bool(ok)
    return _inner_dense_generic(qp, lin, x0, inner_tol, inner_max)


def x_from_lambda(qp: SubproblemQP, lam, x_warm=None, inner_tol=DEFAULT_INNER_TOL,
                  inner_max=DEFAULT_INNER_MAX) -> np.ndarray:
    """argmin_x h(x) + 0.5 x'Cx + d'x + lam' A_tilde x.

    Raises RuntimeError when the inner iterative solve (dense C with a
    nonzero regularizer) hits its iteration cap.
    """
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (qp.M,):
        raise ValueError(f"expected {qp.M} weights")
    x, its, ok = _x_from_lambda(qp, lam, x_warm, inner_tol, inner_max)
    if not ok:
        lin = qp.d + qp.A_tilde.T @ lam
        res = np.linalg.norm(x - qp.h.prox(x - (qp.apply_C(x) + lin) / qp.c_max, 1.0 / qp.c_max))
        raise RuntimeError(f"inner solve did not converge in {its} iterations "
                           f"(prox-gradient residual {res * qp.c_max:.3e})")
    return x


def _solve_generic(qp, lam0, x0, tol, max_iter, inner_tol, inner_max):
    L = qp.lipschitz_dual
    inner_total = 0

    def xs(lam, xw):
        nonlocal inner_total
        x, its, _ = _x_from_lambda(qp, lam, xw, inner_tol, inner_max)
        inner_total += its
        return x

    def stop(lam, x):
        s = qp.A_tilde @ x + qp.b_tilde
        gap = s.max() - lam @ s
        g = qp.dual_objective(lam, x)
        return (gap <= tol * (1.0 + abs(g + gap))
                or gap <= kernels._EPS_FLOOR * (1.0 + np.abs(s).max()))

    lam = project_simplex(lam0)
    x = xs(lam, x0)
    if stop(lam, x):
        return lam, x, 0, inner_total, True
    y, xy, t = lam.copy(), x.copy(), 1.0
    for it in range(1, max_iter + 1):
        xy = xs(y, xy)
        if it > 1 and y.min() >= 0 and stop(y, xy):
            return y, xy, it, inner_total, True
        s = qp._At_c @ xy + qp.b_tilde
        lam_new = project_simplex(y + s / L)
        gm = L * np.linalg.norm(lam_new - y)
        if (gm <= 0.5 * tol * (1.0 + abs(qp.dual_objective(y, xy)))
                or gm <= kernels._EPS_FLOOR * (1.0 + np.abs(s).max())):
            return lam_new, xs(lam_new, xy), it, inner_total, True
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        mom = (t - 1) / t_new
        t = t_new
        if np.dot(y - lam_new, lam_new - lam) > 0:
            mom, t = 0.0, 1.0
        y = lam_new + mom * (lam_new - lam)
        lam = lam_new
    return lam, xs(lam, xy), max_iter, inner_total, False


def _face_solve(Q, r, S):
    """Stationary point of g on the face {lam_S on the simplex, 0 elsewhere}.

    The common level of r is removed and Q rescaled first so that tiny
    slopes (late iterations) are not lost to the rounding of the cut levels.
    """
    k = S.size
    QS = Q[np.ix_(S, S)]
    scale = float(np.abs(QS).max())
    if not scale > 0.0:
        return None
    rS = r[S] - r[S].mean()
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = QS / scale
    K[:k, k] = -1.0
    K[k, :k] = 1.0
    rhs = np.concatenate((-rS / scale, [1.0]))
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=1e-14)[0]
    if not np.all(np.isfinite(sol)):
        return None
    out = np.zeros(Q.shape[0])
    out[S] = sol[:k]
    return out


def _affine_gap(Q, r, lam):
    s = r + Q @ lam
    s = s - s.max()
    return -float(lam @ s)


def _polish_affine(Q, r, lam, max_steps: int = 50):
    """Active-set refinement of a simplex-constrained concave QP solution.

    Starting from the (feasible) FISTA point, alternate exact face solves,
    ratio-test steps that drop blocking weights, and additions of cuts whose
    level exceeds the active one. The result is kept only if its duality gap
    is not larger.
    """
    M = lam.shape[0]
    cur = lam.copy()
    S = np.flatnonzero(cur > 0.0)
    for _ in range(max_steps):
        target = _face_solve(Q, r, S)
        if target is None:
            break
        neg = target[S] < 0.0
        if np.any(neg):
            d = target[S] - cur[S]
            ratios = cur[S][neg] / -d[neg]
            step = float(ratios.min())
            cur = np.maximum(cur + step * (target - cur), 0.0)
            cur[S[neg][np.argmin(ratios)]] = 0.0
            cur /= cur.sum()
            S = np.flatnonzero(cur > 0.0)
            continue
        cur = target / target.sum()
        s = r + Q @ cur
        level = s[S].max()
        outside = np.setdiff1d(np.arange(M), S)
        if outside.size == 0:
            break
        j = outside[np.argmax(s[outside])]
        if s[j] <= level + 1e-15 * (1.0 + abs(level)):
            break
        S = np.append(S, j)
    if _affine_gap(Q, r, cur) <= _affine_gap(Q, r, lam):
        return cur
    return lam


def solve_bundle_qp(qp: SubproblemQP, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                    warm_lambda=None, warm_x=None, inner_tol: float = DEFAULT_INNER_TOL,
                    inner_max: int = DEFAULT_INNER_MAX) -> QPResult:
    """Solve a bundle subproblem by accelerated projected gradient on its
    simplex dual.

    Stops on a duality gap below ``tol * (1 + |primal|)`` (floored at the
    rounding level of the cut values) or a gradient mapping norm below
    ``tol * (1 + |dual|) / 2`` (same floor). A result with ``converged=False`` carries the
    last iterate.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    M, n = qp.M, qp.n
    if warm_lambda is None or np.shape(warm_lambda) != (M,):
        lam0 = np.full(M, 1.0 / M)
    else:
        lam0 = np.asarray(warm_lambda, dtype=float)
    if M == 1:
        lam = np.ones(1)
        x, inner, ok = _x_from_lambda(qp, lam, warm_x, inner_tol, inner_max)
        iters, converged = 0, ok
    else:
        w = l1_weight_of(qp.h)
        if w == 0.0:
            # x_lam = X0 + W lam, so the dual is an explicit M-dim concave QP
            X0 = qp.solve_C(-qp._d_c)
            W = qp.solve_C(-qp._At_c.T)
            if W.ndim == 1:
                W = W[:, None]
            Q = qp._At_c @ W
            Q = 0.5 * (Q + Q.T)
            r = qp._At_c @ X0 + qp.b_tilde
            g0 = 0.5 * float(qp._d_c @ X0)
            lam, iters, _, converged = kernels.simplex_fista_affine(
                np.ascontiguousarray(Q), r, g0, lam0, qp.lipschitz_dual, tol, max_iter)
            lam = _polish_affine(Q, r, lam)
            x = X0 + W @ lam
            inner = 0
        elif w is not None:
            C = qp.C if qp.dense else np.empty((0, 0))
            x0 = np.zeros(n) if warm_x is None else np.asarray(warm_x, dtype=float)
            lam, x, iters, inner, _, converged, inner_ok = kernels.simplex_fista_prox(
                qp._At_c, qp.b_tilde, qp._d_c, float(qp.c_min), C, qp.dense, w, lam0, x0,
                qp.lipschitz_dual, float(qp.c_max), float(qp.c_min), tol, max_iter,
                inner_tol, inner_max)
            converged = bool(converged and inner_ok)
        else:
            x0 = np.zeros(n) if warm_x is None else np.asarray(warm_x, dtype=float)
            lam, x, iters, inner, converged = _solve_generic(
                qp, lam0, x0, tol, max_iter, inner_tol, inner_max)
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite value in bundle subproblem")
    return QPResult(x_star=np.asarray(x), lambda_star=np.asarray(lam),
                    dual_obj=qp.dual_objective(lam, x), primal_obj=qp.primal_objective(x),
                    iterations=int(iters), inner_iterations=int(inner),
                    converged=bool(converged))
