"""Bundle primal-dual methods for linearly constrained composite problems."""

from .core import (L1Regularizer, LeastSquaresSmooth, ProblemSpec, QuadraticSmooth, SpectralInfo,
                   ZeroRegularizer, eval_lagrangian, hessian_moduli, spectral_info)
from .models import BundleModel, Cut, Orientation, Policy
from .solvers import Method, RunResult, SolverConfig, TraceRecord, run, rate_alpha, rate_params
from .subqp import QPResult, SubproblemQP, solve_bundle_qp

__version__ = "0.1.0"

__all__ = [
    "BundleModel", "Cut", "L1Regularizer", "LeastSquaresSmooth", "Method", "Orientation", "Policy",
    "ProblemSpec", "QPResult", "QuadraticSmooth", "RunResult", "SolverConfig", "SpectralInfo",
    "SubproblemQP", "TraceRecord", "ZeroRegularizer", "eval_lagrangian", "hessian_moduli", "run",
    "solve_bundle_qp", "spectral_info", "rate_alpha", "rate_params",
]
