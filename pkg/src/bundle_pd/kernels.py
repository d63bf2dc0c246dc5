"""Hot inner loops: soft-thresholding, simplex projection, accelerated
proximal gradient for l1-regularized quadratics and the simplex-dual FISTA
used by the bundle subproblems.

Every kernel is written against the subset of numpy that numba supports, so
the same source runs compiled (default) or interpreted when
``BUNDLE_PD_NUMBA=0``.
"""

import numpy as np

from ._jit import njit


@njit
def soft_threshold(y, t):
    return np.sign(y) * np.maximum(np.abs(y) - t, 0.0)


@njit
def project_simplex(y):
    """Euclidean projection of ``y`` onto {x >= 0, sum(x) = 1} (sort based)."""
    m = y.shape[0]
    u = np.sort(y)[::-1]
    css = 0.0
    tau = 0.0
    for i in range(m):
        css += u[i]
        t = (css - 1.0) / (i + 1)
        if u[i] - t > 0.0:
            tau = t
    x = np.maximum(y - tau, 0.0)
    return x / x.sum()


@njit
def apg_quad_l1(C, lin, w, x0, L, mu, tol, max_iter):
    """Minimize 0.5 x'Cx + lin'x + w ||x||_1 by accelerated proximal gradient.

    ``L`` bounds the largest eigenvalue of C and ``mu`` its smallest; the
    constant-momentum scheme is used when ``mu > 0``, otherwise FISTA with
    gradient restart. Stops when the gradient mapping norm drops below
    ``tol * (1 + ||lin||)``.

    Returns (x, iterations, residual, converged).
    """
    step = 1.0 / L
    scale = tol * (1.0 + np.sqrt(np.dot(lin, lin)))
    if mu > 0.0:
        sq = np.sqrt(mu / L)
        mom_const = (1.0 - sq) / (1.0 + sq)
    else:
        mom_const = -1.0
    x = x0.copy()
    y = x0.copy()
    t = 1.0
    res = np.inf
    for it in range(1, max_iter + 1):
        grad = np.dot(C, y) + lin
        x_new = soft_threshold(y - step * grad, step * w)
        diff = x_new - y
        res = L * np.sqrt(np.dot(diff, diff))
        if res <= scale:
            return x_new, it, res, True
        if mom_const >= 0.0:
            mom = mom_const
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            mom = (t - 1.0) / t_new
            t = t_new
        if np.dot(y - x_new, x_new - x) > 0.0:
            mom = 0.0
            t = 1.0
        y = x_new + mom * (x_new - x)
        x = x_new
    return x, max_iter, res, False


_EPS_FLOOR = 16.0 * np.finfo(np.float64).eps


@njit
def _gap(s, lam):
    return np.max(s) - np.dot(lam, s)


@njit
def _gap_ok(gap, g, s, tol):
    # relative gap test, floored at the rounding level of the cut values
    return gap <= tol * (1.0 + abs(g + gap)) or gap <= _EPS_FLOOR * (1.0 + np.max(np.abs(s)))


@njit
def _step_ok(Lg, step, s, g, tol):
    # small gradient mapping; scaled like the gap test so both stop at the
    # same accuracy, with the same rounding floor
    gm = Lg * np.sqrt(np.dot(step, step))
    return gm <= 0.5 * tol * (1.0 + abs(g)) or gm <= _EPS_FLOOR * (1.0 + np.max(np.abs(s)))


@njit
def simplex_fista_affine(Q, r, g0, lam0, Lg, tol, max_iter):
    """Maximize g(lam) = g0 + r'lam + 0.5 lam'Q lam over the simplex.

    Q is negative semidefinite. This is the dual of a bundle subproblem whose
    inner minimizer is affine in lam (no regularizer). Returns
    (lam, iterations, gap, converged).
    """
    lam = project_simplex(lam0)
    s = r + np.dot(Q, lam)
    gap = _gap(s, lam)
    g = g0 + np.dot(r, lam) + 0.5 * np.dot(lam, np.dot(Q, lam))
    if _gap_ok(gap, g, s, tol):
        return lam, 0, gap, True
    y = lam.copy()
    t = 1.0
    for it in range(1, max_iter + 1):
        s = r + np.dot(Q, y)
        if it > 1 and np.min(y) >= 0.0:
            gap = _gap(s, y)
            g = g0 + np.dot(r, y) + 0.5 * np.dot(y, s - r)
            if _gap_ok(gap, g, s, tol):
                return y, it, gap, True
        lam_new = project_simplex(y + s / Lg)
        step = lam_new - y
        if _step_ok(Lg, step, s, g, tol):
            s = r + np.dot(Q, lam_new)
            return lam_new, it, _gap(s, lam_new), True
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_new
        t = t_new
        if np.dot(y - lam_new, lam_new - lam) > 0.0:
            mom = 0.0
            t = 1.0
        y = lam_new + mom * (lam_new - lam)
        lam = lam_new
    s = r + np.dot(Q, lam)
    return lam, max_iter, _gap(s, lam), False


@njit
def _x_of_lambda(At, d, c, C, dense, w, lam, x_warm, Lc, mu_c, inner_tol, inner_max):
    lin = d + np.dot(At.T, lam)
    if not dense:
        return soft_threshold(-lin / c, w / c), 0, True
    x, its, _, ok = apg_quad_l1(C, lin, w, x_warm, Lc, mu_c, inner_tol, inner_max)
    return x, its, ok


@njit
def _dual_value(At, bt, d, c, C, dense, w, lam, x, s):
    if dense:
        quad = 0.5 * np.dot(x, np.dot(C, x))
    else:
        quad = 0.5 * c * np.dot(x, x)
    return w * np.sum(np.abs(x)) + quad + np.dot(d, x) + np.dot(lam, s)


@njit
def simplex_fista_prox(At, bt, d, c, C, dense, w, lam0, x0, Lg, Lc, mu_c,
                       tol, max_iter, inner_tol, inner_max):
    """Maximize the simplex dual of

        min_x max_i (At x + bt)_i + 0.5 x'Cx + d'x + w ||x||_1

    where C = c I (``dense`` false) or the dense matrix ``C``. The inner
    minimizer is the closed-form soft-threshold for diagonal C and a warm
    started ``apg_quad_l1`` solve otherwise.

    Returns (lam, x, iterations, inner_iterations, gap, converged,
    inner_ok).
    """
    inner_total = 0
    inner_ok = True
    lam = project_simplex(lam0)
    x, its, ok = _x_of_lambda(At, d, c, C, dense, w, lam, x0, Lc, mu_c,
                              inner_tol, inner_max)
    inner_total += its
    inner_ok = inner_ok and ok
    s = np.dot(At, x) + bt
    gap = _gap(s, lam)
    g = _dual_value(At, bt, d, c, C, dense, w, lam, x, s)
    if _gap_ok(gap, g, s, tol):
        return lam, x, 0, inner_total, gap, True, inner_ok
    y = lam.copy()
    xy = x.copy()
    t = 1.0
    for it in range(1, max_iter + 1):
        xy, its, ok = _x_of_lambda(At, d, c, C, dense, w, y, xy, Lc, mu_c,
                                   inner_tol, inner_max)
        inner_total += its
        inner_ok = inner_ok and ok
        s = np.dot(At, xy) + bt
        if it > 1 and np.min(y) >= 0.0:
            gap = _gap(s, y)
            g = _dual_value(At, bt, d, c, C, dense, w, y, xy, s)
            if _gap_ok(gap, g, s, tol):
                return y, xy, it, inner_total, gap, True, inner_ok
        lam_new = project_simplex(y + s / Lg)
        step = lam_new - y
        if _step_ok(Lg, step, s, g, tol):
            x, its, ok = _x_of_lambda(At, d, c, C, dense, w, lam_new, xy, Lc,
                                      mu_c, inner_tol, inner_max)
            inner_total += its
            s = np.dot(At, x) + bt
            return lam_new, x, it, inner_total, _gap(s, lam_new), True, inner_ok and ok
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_new
        t = t_new
        if np.dot(y - lam_new, lam_new - lam) > 0.0:
            mom = 0.0
            t = 1.0
        y = lam_new + mom * (lam_new - lam)
        lam = lam_new
    x, its, ok = _x_of_lambda(At, d, c, C, dense, w, lam, xy, Lc, mu_c,
                              inner_tol, inner_max)
    inner_total += its
    s = np.dot(At, x) + bt
    return lam, x, max_iter, inner_total, _gap(s, lam), False, inner_ok and ok
