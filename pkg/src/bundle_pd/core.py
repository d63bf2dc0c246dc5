"""Problem representation and spectral quantities.

Problems have the form

    minimize f(x) + h(x)   subject to   A x = b

with f convex and differentiable (``SmoothFunction``) and h convex with an
inexpensive proximal operator (``Regularizer``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol

import numpy as np

from .kernels import soft_threshold

UNIT_ROUNDOFF = np.finfo(float).eps / 2


class SmoothFunction(Protocol):
    def __call__(self, x: np.ndarray) -> tuple[float, np.ndarray]: ...


class Regularizer(Protocol):
    def value(self, x: np.ndarray) -> float: ...

    def prox(self, y: np.ndarray, t: float) -> np.ndarray: ...


class ZeroRegularizer:
    """h = 0."""

    l1_weight = 0.0

    def value(self, x):
        return 0.0

    def prox(self, y, t):
        return np.array(y, dtype=float, copy=True)

    def __repr__(self):
        return "ZeroRegularizer()"


class L1Regularizer:
    """h(x) = weight * ||x||_1."""

    def __init__(self, weight: float):
        if weight < 0:
            raise ValueError("l1 weight must be nonnegative")
        self.l1_weight = float(weight)

    def value(self, x):
        return self.l1_weight * float(np.sum(np.abs(x)))

    def prox(self, y, t):
        return soft_threshold(np.asarray(y, dtype=float), t * self.l1_weight)

    def __repr__(self):
        return f"L1Regularizer({self.l1_weight!r})"


def l1_weight_of(h) -> Optional[float]:
    """Weight w when h = w ||.||_1 (0 for h = 0), None for other regularizers."""
    w = getattr(h, "l1_weight", None)
    return None if w is None else float(w)


class QuadraticSmooth:
    """f(x) = 0.5 x'Hx + g'x + c with H symmetric positive semidefinite."""

    def __init__(self, H, g, c=0.0):
        self.hessian = np.asarray(H, dtype=float)
        self.linear = np.asarray(g, dtype=float)
        self.constant = float(c)

    def __call__(self, x):
        Hx = self.hessian @ x
        return 0.5 * float(x @ Hx) + float(self.linear @ x) + self.constant, Hx + self.linear


class LeastSquaresSmooth:
    """f(x) = ||Px - q||^2 / (2N) + lambda2 ||x||^2.

    Evaluated through the residual; ``hessian`` and ``linear`` expose the
    equivalent quadratic form for the exact-step solvers.
    """

    def __init__(self, P, q, N: int, lambda2: float = 0.0):
        self.P = np.asarray(P, dtype=float)
        self.q = np.asarray(q, dtype=float)
        self.N = int(N)
        self.lambda2 = float(lambda2)
        n = self.P.shape[1]
        self.hessian = self.P.T @ self.P / self.N + 2.0 * self.lambda2 * np.eye(n)
        self.linear = -self.P.T @ self.q / self.N

    def __call__(self, x):
        r = self.P @ x - self.q
        val = float(r @ r) / (2 * self.N) + self.lambda2 * float(x @ x)
        grad = self.P.T @ r / self.N + 2.0 * self.lambda2 * x
        return val, grad


@dataclass(frozen=True)
class ProblemSpec:
    """Linear equality-constrained composite problem.

    ``beta``/``mu`` are the smoothness and strong-convexity moduli of f when
    known. ``lower_bound_f`` bounds min f from below (Polyak primal models);
    ``upper_bound_q`` and ``upper_bound_q_rho`` bound the (augmented) dual
    optimum from above (Polyak dual models).
    """

    f: SmoothFunction
    h: Regularizer
    A: np.ndarray
    b: np.ndarray
    lower_bound_f: Optional[float] = None
    upper_bound_q: Optional[float] = None
    upper_bound_q_rho: Optional[float] = None
    beta: Optional[float] = None
    mu: Optional[float] = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape[0] != b.shape[0]:
            raise ValueError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def objective(self, x) -> float:
        """F(x) = f(x) + h(x)."""
        return self.f(x)[0] + self.h.value(x)

    def bound_for_dual(self, rho: float) -> Optional[float]:
        return self.upper_bound_q_rho if rho > 0 else self.upper_bound_q


def eval_lagrangian(problem: ProblemSpec, x, v, rho: float = 0.0) -> float:
    """L_rho(x, v) = F(x) + <v, Ax - b> + (rho/2) ||Ax - b||^2."""
    x = np.asarray(x, dtype=float)
    hx = problem.h.value(x)
    if not np.isfinite(hx):
        return float("inf")
    r = problem.A @ x - problem.b
    return problem.f(x)[0] + hx + float(np.dot(v, r)) + 0.5 * rho * float(r @ r)


@dataclass(frozen=True)
class SpectralInfo:
    beta: float
    mu: float
    norm_A: float
    sigma_A: float
    rank_A: int
    singular_values: np.ndarray = field(repr=False, default=None)


def _svd_rank(A):
    U, s, Vt = np.linalg.svd(A)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("degenerate constraint matrix")
    thresh = max(A.shape) * s[0] * UNIT_ROUNDOFF
    rank = int(np.sum(s > thresh))
    return U, s, Vt, rank


def spectral_info(A, P=None, lambda2: float = 0.0, N: int = 1,
                  beta: Optional[float] = None, mu: Optional[float] = None) -> SpectralInfo:
    """Singular-value data of A plus smoothness/strong-convexity moduli.

    With ``P`` given, beta and mu follow the least-squares recipe
    lambda_max(P'P)/(2N) + lambda2 and lambda_min(P'P)/(2N) + lambda2.
    Otherwise they are taken from the ``beta``/``mu`` arguments.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    _, s, _, rank = _svd_rank(A)
    if P is not None:
        P = np.asarray(P, dtype=float)
        ev = np.linalg.eigvalsh(P.T @ P)
        beta = ev[-1] / (2 * N) + lambda2
        mu = max(ev[0], 0.0) / (2 * N) + lambda2
    beta = 0.0 if beta is None else float(beta)
    mu = 0.0 if mu is None else float(mu)
    if mu > beta:
        raise ValueError("mu must not exceed beta")
    return SpectralInfo(beta=beta, mu=mu, norm_A=float(s[0]), sigma_A=float(s[rank - 1]),
                        rank_A=rank, singular_values=s)


def hessian_moduli(H) -> tuple[float, float]:
    """(beta, mu) = (lambda_max(H), lambda_min(H)) for a quadratic f."""
    ev = np.linalg.eigvalsh(np.asarray(H, dtype=float))
    return float(ev[-1]), float(max(ev[0], 0.0))


class SubspaceProjectors:
    """Orthogonal projectors onto Null(A) and Range(A), built from one SVD."""

    def __init__(self, A):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        U, s, Vt, rank = _svd_rank(A)
        self.rank = rank
        self._row_basis = Vt[:rank].T      # orthonormal basis of Range(A')
        self._col_basis = U[:, :rank]      # orthonormal basis of Range(A)

    def null(self, g):
        """P_N g with N = Null(A)."""
        g = np.asarray(g, dtype=float)
        return g - self._row_basis @ (self._row_basis.T @ g)

    def range(self, w):
        """Projection of w onto Range(A)."""
        w = np.asarray(w, dtype=float)
        return self._col_basis @ (self._col_basis.T @ w)

    def left_null(self, w):
        """Projection of w onto Null(A') = Range(A)^perp."""
        return np.asarray(w, dtype=float) - self.range(w)


def project_null(A, g):
    """Orthogonal projection of g onto Null(A)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    g = np.asarray(g, dtype=float)
    if A.shape[1] != g.shape[0]:
        raise ValueError(f"A has {A.shape[1]} columns but g has {g.shape[0]} entries")
    return SubspaceProjectors(A).null(g)


def gradient_check(f: SmoothFunction, x, rng=None, n_probes: int = 20, delta: float = 1e-6):
    """Largest central-difference discrepancy of the gradient of f.

    Returns max_i |fd_i - grad_i| / (1 + |grad_i|) over ``n_probes`` random
    coordinates; the step is ``delta * max(1, ||x||)``.
    """
    rng = np.random.default_rng(rng)
    x = np.asarray(x, dtype=float)
    _, g = f(x)
    h = delta * max(1.0, float(np.linalg.norm(x)))
    worst = 0.0
    for i in rng.integers(0, x.size, size=n_probes):
        e = np.zeros_like(x)
        e[i] = h
        fd = (f(x + e)[0] - f(x - e)[0]) / (2 * h)
        worst = max(worst, abs(fd - g[i]) / (1.0 + abs(g[i])))
    return worst


# ---------------------------------------------------------------- problem files

def _write_csv(path, arr):
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    np.savetxt(path, arr, delimiter=",", fmt="%.17g")


def _read_csv(path, vector=False):
    arr = np.loadtxt(path, delimiter=",", ndmin=2)
    return arr.reshape(-1) if vector else arr


def save_problem_dir(directory, A, b, P, q, meta: dict) -> Path:
    """Write A.csv, b.csv, P.csv, q.csv and meta.json into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    _write_csv(d / "A.csv", A)
    _write_csv(d / "b.csv", b)
    _write_csv(d / "P.csv", P)
    _write_csv(d / "q.csv", q)
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return d


def load_problem_dir(directory) -> tuple[ProblemSpec, dict]:
    """Read a problem directory back into a least-squares ``ProblemSpec``."""
    d = Path(directory)
    meta = json.loads((d / "meta.json").read_text())
    A = _read_csv(d / "A.csv")
    b = _read_csv(d / "b.csv", vector=True)
    P = _read_csv(d / "P.csv")
    q = _read_csv(d / "q.csv", vector=True)
    N = int(meta.get("N", P.shape[0]))
    lam1 = float(meta.get("lambda1", 0.0))
    lam2 = float(meta.get("lambda2", 0.0))
    info = spectral_info(A, P=P, lambda2=lam2, N=N)
    h = L1Regularizer(lam1) if lam1 > 0 else ZeroRegularizer()
    problem = ProblemSpec(
        f=LeastSquaresSmooth(P, q, N, lam2), h=h, A=A, b=b,
        lower_bound_f=meta.get("lower_bound_f"),
        upper_bound_q=meta.get("upper_bound_q"),
        upper_bound_q_rho=meta.get("upper_bound_q_rho"),
        beta=info.beta, mu=info.mu,
    )
    return problem, meta
