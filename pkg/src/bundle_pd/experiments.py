"""Experiment harness: instance generation, configured runs and sweeps,
trace export and SVG plots.

A configuration is one JSON document::

    {
      "instance": {"n": 200, "m": 150, "N": 200, "lambda1": 1e-3,
                   "lambda2": 0.0, "seed": 0},
      "moduli": "halved",
      "budget": 50,
      "methods": [
        {"method": "BMM", "rho": 0.05, "m_p": 10, "m_d": 10,
         "step_p": {"mult": 4, "unit": "1/beta"},
         "step_d": {"mult": 2, "unit": "rho"}}
      ],
      "sweep": {"axis": "c_p_inv", "values": [0.25, 0.5, 1, 2, 4, 8]},
      "outputs": {"dir": "out", "plot_svg": true}
    }

Step sizes are given as inverse steps 1/c = mult * unit with unit one of
``abs``, ``1/beta``, ``rho``, ``mu/normA2`` and ``mu/beta2``; absolute
``c_p``/``c_d`` numbers and ``"rate_safety": s`` are accepted
too. ``moduli`` selects whether beta and mu come from the least-squares
recipe (``halved``) or from the exact Hessian spectrum (``hessian``).
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import (L1Regularizer, LeastSquaresSmooth, ProblemSpec, SpectralInfo, ZeroRegularizer,
                   hessian_moduli, load_problem_dir, save_problem_dir, spectral_info)
from .models import Policy
from .solvers import RATE_REGIME, Method, SolverConfig, run, rate_alpha, rate_params
from .verify import (ReferenceSolution, reference_floor, check_contraction, reference_solution,
                     rounding_floor)

CSV_COLUMNS = ("iter", "obj", "obj_gap", "feas_sq", "residual", "pn_grad", "dist_x", "dist_v",
               "inner_p", "inner_d", "wall_ns", "f_gap", "inner_ok")
SWEEP_AXES = ("c_p_inv", "c_d_inv")
STEP_UNITS = ("abs", "1/beta", "rho", "mu/normA2", "mu/beta2")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# ------------------------------------------------------------------ instances

@dataclass(frozen=True)
class InstanceConfig:
    n: int = 200
    m: int = 150
    N: int = 200
    lambda1: float = 1e-3
    lambda2: float = 0.0
    seed: int = 0
    path: Optional[str] = None

    def __post_init__(self):
        if self.path is None and min(self.n, self.m, self.N) < 1:
            raise ConfigError("n, m and N must be >= 1")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("regularization weights must be nonnegative")


def instance_arrays(cfg: InstanceConfig):
    """(P, q, A, b, x0) drawn from one seeded generator in that order."""
    rng = np.random.default_rng(cfg.seed)
    P = rng.standard_normal((cfg.N, cfg.n))
    q = rng.standard_normal(cfg.N)
    A = rng.standard_normal((cfg.m, cfg.n))
    x0 = rng.standard_normal(cfg.n)
    return P, q, A, A @ x0, x0


def _build_problem(P, q, A, b, N, lambda1, lambda2, x_feasible=None, moduli="halved"):
    f = LeastSquaresSmooth(P, q, N, lambda2)
    h = L1Regularizer(lambda1) if lambda1 > 0 else ZeroRegularizer()
    if moduli == "hessian":
        beta, mu = hessian_moduli(f.hessian)
    else:
        info = spectral_info(A, P=P, lambda2=lambda2, N=N)
        beta, mu = info.beta, info.mu
    u = None
    if x_feasible is not None:
        # weak duality: F at any feasible point bounds q and q_rho from above
        u = f(x_feasible)[0] + h.value(x_feasible)
    return ProblemSpec(f, h, A, b, lower_bound_f=0.0, upper_bound_q=u, upper_bound_q_rho=u,
                       beta=beta, mu=mu)


def gen_problem(cfg: InstanceConfig, moduli: str = "halved") -> ProblemSpec:
    """Seeded least-squares instance F = ||Px - q||^2/(2N) + l1||x||_1 + l2||x||^2
    with b = A x0 feasible by construction."""
    if cfg.path is not None:
        problem, meta = load_problem_dir(cfg.path)
        if moduli == "hessian":
            beta, mu = hessian_moduli(problem.f.hessian)
            problem = dataclasses.replace(problem, beta=beta, mu=mu)
        return problem
    P, q, A, b, x0 = instance_arrays(cfg)
    return _build_problem(P, q, A, b, cfg.N, cfg.lambda1, cfg.lambda2, x0, moduli)


def write_instance(cfg: InstanceConfig, directory) -> Path:
    P, q, A, b, x0 = instance_arrays(cfg)
    problem = _build_problem(P, q, A, b, cfg.N, cfg.lambda1, cfg.lambda2, x0)
    meta = {"n": cfg.n, "m": cfg.m, "N": cfg.N, "lambda1": cfg.lambda1, "lambda2": cfg.lambda2,
            "seed": cfg.seed, "lower_bound_f": 0.0, "upper_bound_q": problem.upper_bound_q,
            "upper_bound_q_rho": problem.upper_bound_q_rho}
    return save_problem_dir(directory, A, b, P, q, meta)


def problem_spectral(problem: ProblemSpec) -> SpectralInfo:
    return spectral_info(problem.A, beta=problem.beta, mu=problem.mu)


# ------------------------------------------------------------------ config

@dataclass(frozen=True)
class StepRule:
    """Inverse step 1/c = mult * unit, or an absolute value of c."""

    mult: float = 1.0
    unit: str = "abs"
    absolute: Optional[float] = None

    @classmethod
    def parse(cls, spec) -> "StepRule":
        if spec is None:
            return cls(absolute=None, mult=float("nan"))
        if isinstance(spec, (int, float)):
            return cls(absolute=float(spec))
        if not isinstance(spec, dict) or "unit" not in spec:
            raise ConfigError(f"bad step specification {spec!r}")
        if spec["unit"] not in STEP_UNITS:
            raise ConfigError(f"unknown step unit {spec['unit']!r}; expected one of {STEP_UNITS}")
        mult = float(spec.get("mult", 1.0))
        if not mult > 0:
            raise ConfigError("step multiplier must be positive")
        return cls(mult=mult, unit=spec["unit"])

    def inverse(self, spec: SpectralInfo, rho: float) -> float:
        if self.absolute is not None:
            return 1.0 / self.absolute
        unit = {"abs": 1.0,
                "1/beta": 1.0 / spec.beta,
                "rho": rho,
                "mu/normA2": spec.mu / spec.norm_A ** 2,
                "mu/beta2": spec.mu / spec.beta ** 2}[self.unit]
        if not unit > 0:
            raise ConfigError(f"step unit {self.unit} evaluates to {unit}")
        return self.mult * unit


@dataclass(frozen=True)
class MethodSpec:
    method: Method
    rho: float = 0.0
    m_p: int = 1
    m_d: int = 1
    step_p: StepRule = StepRule(absolute=None, mult=float("nan"))
    step_d: StepRule = StepRule(absolute=None, mult=float("nan"))
    rate_safety: Optional[float] = None
    primal_policy: Policy = Policy.CUTTING_PLANE
    dual_policy: Policy = Policy.CUTTING_PLANE
    label: Optional[str] = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def parse(cls, d: dict) -> "MethodSpec":
        if not isinstance(d, dict) or "method" not in d:
            raise ConfigError("each method entry needs a 'method' field")
        try:
            method = Method.parse(d["method"])
            primal_policy = Policy(d.get("primal_policy", "cutting_plane"))
            dual_policy = Policy(d.get("dual_policy", "cutting_plane"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        step_p = StepRule.parse(d.get("c_p", d.get("step_p")))
        step_d = StepRule.parse(d.get("c_d", d.get("step_d")))
        safety = d.get("rate_safety")
        extra = {k: d[k] for k in ("subqp_tol", "inner_tol", "exact_inner_tol") if k in d}
        return cls(method=method, rho=float(d.get("rho", 0.0)), m_p=int(d.get("m_p", 1)),
                   m_d=int(d.get("m_d", 1)), step_p=step_p, step_d=step_d,
                   rate_safety=None if safety is None else float(safety),
                   primal_policy=primal_policy, dual_policy=dual_policy, label=d.get("label"),
                   extra=extra)

    def base_label(self) -> str:
        return self.label or f"{self.method.value}_m{self.m_p}-{self.m_d}"

    def solver_config(self, spec: SpectralInfo, budget: int, axis: Optional[str] = None,
                      mult: float = 1.0) -> SolverConfig:
        m = self.method
        if self.rate_safety is not None:
            c_p, c_d, _ = rate_params(spec, m, rho=self.rho, safety=self.rate_safety)
        else:
            c_p = 0.0
            if m not in (Method.BDA_D, Method.BMM_D, Method.DA, Method.MM):
                if self.step_p.absolute is None and math.isnan(self.step_p.mult):
                    raise ConfigError(f"{m.value} needs a primal step (c_p or step_p)")
                c_p = 1.0 / self.step_p.inverse(spec, self.rho)
            if self.step_d.absolute is None and math.isnan(self.step_d.mult):
                if self.rho > 0:
                    c_d = 1.0 / self.rho
                else:
                    raise ConfigError(f"{m.value} needs a dual step (c_d or step_d)")
            else:
                c_d = 1.0 / self.step_d.inverse(spec, self.rho)
        if axis == "c_p_inv" and c_p > 0:
            c_p = c_p / mult
        elif axis == "c_d_inv":
            c_d = c_d / mult
        try:
            return SolverConfig(m, c_p=c_p, c_d=c_d, rho=self.rho, m_p=self.m_p, m_d=self.m_d,
                                primal_policy=self.primal_policy, dual_policy=self.dual_policy,
                                max_iter=budget, **self.extra).validated()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class ExperimentConfig:
    instance: InstanceConfig
    methods: tuple
    budget: int = 50
    moduli: str = "halved"
    sweep_axis: Optional[str] = None
    sweep_values: tuple = ()
    out_dir: str = "out"
    plot_svg: bool = True
    report_json: str = "report.json"
    trace_dir: str = "."
    check_contraction: bool = True

    @property
    def report_path(self) -> Path:
        return Path(self.out_dir) / self.report_json

    @property
    def trace_path(self) -> Path:
        return Path(self.out_dir) / self.trace_dir

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = set(d) - {"instance", "methods", "budget", "moduli", "sweep", "outputs"}
        if unknown:
            raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
        inst = d.get("instance", {})
        try:
            instance = InstanceConfig(**inst)
        except TypeError as exc:
            raise ConfigError(f"bad instance block: {exc}") from None
        methods = tuple(MethodSpec.parse(m) for m in d.get("methods", []))
        if not methods:
            raise ConfigError("at least one method is required")
        moduli = d.get("moduli", "halved")
        if moduli not in ("halved", "hessian"):
            raise ConfigError("moduli must be 'halved' or 'hessian'")
        budget = int(d.get("budget", 50))
        if budget < 0:
            raise ConfigError("budget must be >= 0")
        sweep = d.get("sweep") or {}
        axis = sweep.get("axis")
        values = tuple(float(v) for v in sweep.get("values", ()))
        if axis is not None and axis not in SWEEP_AXES:
            raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")
        if axis is not None and (not values or min(values) <= 0):
            raise ConfigError("sweep values must be positive")
        outputs = d.get("outputs", {})
        bad = set(outputs) - {"dir", "plot_svg", "report_json", "trace_csv"}
        if bad:
            raise ConfigError(f"unknown output keys {sorted(bad)}")
        labels = [m.base_label() for m in methods]
        if len(set(labels)) != len(labels):
            raise ConfigError("method labels must be unique")
        return cls(instance=instance, methods=methods, budget=budget, moduli=moduli,
                   sweep_axis=axis, sweep_values=values, out_dir=outputs.get("dir", "out"),
                   plot_svg=bool(outputs.get("plot_svg", True)),
                   report_json=str(outputs.get("report_json", "report.json")),
                   trace_dir=str(outputs.get("trace_csv", ".")))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data)

    def with_overrides(self, seed=None, out_dir=None, sweep_axis=None, sweep_values=None):
        inst = self.instance if seed is None else dataclasses.replace(self.instance, seed=int(seed))
        cfg = dataclasses.replace(self, instance=inst)
        if out_dir is not None:
            cfg = dataclasses.replace(cfg, out_dir=str(out_dir))
        if sweep_axis is not None:
            if sweep_axis not in SWEEP_AXES:
                raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")
            cfg = dataclasses.replace(cfg, sweep_axis=sweep_axis)
        if sweep_values is not None:
            vals = tuple(float(v) for v in sweep_values)
            if not vals or min(vals) <= 0:
                raise ConfigError("sweep values must be positive")
            cfg = dataclasses.replace(cfg, sweep_values=vals)
        if cfg.sweep_axis is not None and not cfg.sweep_values:
            raise ConfigError("a sweep needs values")
        return cfg


# ------------------------------------------------------------------ trace export

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def trace_rows(records):
    for t in records:
        yield (t.k, t.obj, t.obj_gap, t.feas_sq, t.residual, t.pn_grad, t.dist_x, t.dist_v,
               t.inner_iters_primal, t.inner_iters_dual, t.wall_ns, t.f_gap, t.inner_ok)


def export_trace(records, path) -> Path:
    """Write a trace as CSV (header plus one row per record, full precision)."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for row in trace_rows(records):
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write trace to {path}: {exc}") from exc
    return path


def read_trace(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        rec = {}
        for k, v in r.items():
            rec[k] = int(v) if k in ("iter", "inner_p", "inner_d", "wall_ns", "inner_ok") else float(v)
        out.append(rec)
    return out


def trace_digest(path) -> str:
    """SHA-256 of a trace CSV with the wall_ns column removed."""
    h = hashlib.sha256()
    with Path(path).open(newline="") as fh:
        for row in csv.reader(fh):
            del row[CSV_COLUMNS.index("wall_ns")]
            h.update(",".join(row).encode() + b"\n")
    return h.hexdigest()


# ------------------------------------------------------------------ SVG

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2",
            "#17becf", "#7f7f7f", "#bcbd22")


def _log_ticks(lo, hi):
    return [10.0 ** e for e in range(int(math.floor(lo)), int(math.ceil(hi)) + 1)]


def svg_line_plot(series: dict, path, title: str = "", xlabel: str = "", ylabel: str = "",
                  logx: bool = False, logy: bool = True, width: int = 640, height: int = 420) -> Path:
    """Polyline plot of {label: (xs, ys)}; non-finite or non-positive (log)
    points break the line."""
    left, right, top, bottom = 70, 150, 30, 50
    pw, ph = width - left - right, height - top - bottom
    tx = (lambda v: math.log10(v)) if logx else (lambda v: v)
    ty = (lambda v: math.log10(v)) if logy else (lambda v: v)

    def ok(x, y):
        return (math.isfinite(x) and math.isfinite(y) and (not logx or x > 0) and (not logy or y > 0))

    pts = [(tx(x), ty(y)) for xs, ys in series.values() for x, y in zip(xs, ys) if ok(x, y)]
    if pts:
        x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
        y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def sx(v):
        return left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
           f'<text x="{left + pw / 2}" y="18" text-anchor="middle" font-size="13">{title}</text>',
           f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">{xlabel}</text>',
           f'<text x="15" y="{top + ph / 2}" text-anchor="middle" '
           f'transform="rotate(-90 15 {top + ph / 2})">{ylabel}</text>']
    if logy:
        for t in _log_ticks(y0, y1):
            v = math.log10(t)
            if y0 - 1e-9 <= v <= y1 + 1e-9:
                out.append(f'<line x1="{left}" x2="{left + pw}" y1="{sy(v):.1f}" y2="{sy(v):.1f}" '
                           f'stroke="#ddd"/>')
                out.append(f'<text x="{left - 5}" y="{sy(v) + 4:.1f}" text-anchor="end">1e{int(v)}</text>')
    else:
        for v in np.linspace(y0, y1, 5):
            out.append(f'<text x="{left - 5}" y="{sy(v) + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    xt = [math.log10(t) for t in _log_ticks(x0, x1)] if logx else list(np.linspace(x0, x1, 6))
    for v in xt:
        if x0 - 1e-9 <= v <= x1 + 1e-9:
            lab = f"{10 ** v:.3g}" if logx else f"{v:.3g}"
            out.append(f'<text x="{sx(v):.1f}" y="{top + ph + 15}" text-anchor="middle">{lab}</text>')
    for i, (label, (xs, ys)) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        segs, cur = [], []
        for x, y in zip(xs, ys):
            if ok(x, y):
                cur.append(f"{sx(tx(x)):.2f},{sy(ty(y)):.2f}")
            elif cur:
                segs.append(cur)
                cur = []
        if cur:
            segs.append(cur)
        for seg in segs:
            if len(seg) == 1:
                cx, cy = seg[0].split(",")
                out.append(f'<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>')
            else:
                out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                           f'points="{" ".join(seg)}"/>')
        ly = top + 12 + 16 * i
        out.append(f'<line x1="{left + pw + 10}" x2="{left + pw + 30}" y1="{ly}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 35}" y="{ly + 4}">{label}</text>')
    out.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(out) + "\n")
    return path


# ------------------------------------------------------------------ execution

@dataclass
class RunSpec:
    label: str
    base_label: str
    config: SolverConfig
    sweep_value: Optional[float] = None


def expand_runs(cfg: ExperimentConfig, spec: SpectralInfo) -> list[RunSpec]:
    runs = []
    for m in cfg.methods:
        if cfg.sweep_axis is None:
            runs.append(RunSpec(m.base_label(), m.base_label(), m.solver_config(spec, cfg.budget)))
        else:
            for v in cfg.sweep_values:
                sc = m.solver_config(spec, cfg.budget, cfg.sweep_axis, v)
                runs.append(RunSpec(f"{m.base_label()}_{cfg.sweep_axis}{v:g}", m.base_label(), sc, v))
    return runs


def _contraction_summary(trace, config: SolverConfig, spec: SpectralInfo, ref: ReferenceSolution):
    """Check the linear-rate inequality matching the method, when its
    parameter conditions hold; None otherwise."""
    alpha = rate_alpha(spec, config.method, config.c_p, config.c_d, config.rho)
    if alpha is None or not alpha > 0 or (RATE_REGIME[config.method] != "aug_dual" and alpha >= 1):
        return None
    th = RATE_REGIME[config.method]
    s2, beta, F = spec.sigma_A ** 2, spec.beta, ref.F_star
    kappa_d = s2 / beta if config.rho == 0 else 1.0 / (beta / s2 + config.rho)
    dv0 = float(np.linalg.norm(ref.v_star)) ** 2
    floor_v = reference_floor(ref, dv0) + rounding_floor(F, kappa_d)
    if th in ("joint", "aug_joint"):
        mode = "Lambda_shrink"
        floor = (0.5 * config.c_p * (rounding_floor(F, spec.mu) + reference_floor(ref, 0.0))
                 + 0.5 * config.c_d * floor_v)
    else:
        mode = "v_shrink" if th == "dual" else "v_shrink_1_over_1_plus_alpha"
        floor = floor_v
    rep = check_contraction(trace, alpha, mode, c_p=config.c_p, c_d=config.c_d, abs_floor=floor)
    return {"mode": mode, "alpha": alpha, "status": rep.status,
            "first_violation": rep.first_violation, "margin": rep.margin}


def execute_run(problem: ProblemSpec, reference: ReferenceSolution, run_spec: RunSpec, out_dir,
                spec: SpectralInfo, check: bool = True) -> dict:
    """Run one configuration, write its CSV and return its summary."""
    summary = {"label": run_spec.label, "method": run_spec.config.method.value,
               "c_p": run_spec.config.c_p, "c_d": run_spec.config.c_d, "rho": run_spec.config.rho,
               "m_p": run_spec.config.m_p, "m_d": run_spec.config.m_d,
               "sweep_value": run_spec.sweep_value}
    try:
        result = run(problem, run_spec.config, reference=reference, keep_iterates=False)
    except (ValueError, RuntimeError, FloatingPointError) as exc:
        summary.update(status="error", error=str(exc), final_residual=None)
        return summary
    path = export_trace(result.trace, Path(out_dir) / f"{run_spec.label}.csv")
    last = result.final
    summary.update(status=result.status, iterations=last.k, final_residual=last.residual,
                   final_obj_gap=last.obj_gap, final_f_gap=last.f_gap, final_feas_sq=last.feas_sq,
                   inner_ok=all(t.inner_ok for t in result.trace), csv=path.name,
                   residual=[t.residual for t in result.trace])
    if check and result.status != "diverged":
        summary["contraction"] = _contraction_summary(result.trace, run_spec.config, spec, reference)
    return summary


def default_jobs() -> int:
    env = os.environ.get("BUNDLE_PD_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("BUNDLE_PD_JOBS must be an integer") from None
    return 1


def divergence_thresholds(summaries, axis_values) -> dict:
    """Largest sweep value whose run stayed finite, per method label."""
    out = {}
    for s in summaries:
        base = s["base_label"]
        finite = (s.get("status") not in ("diverged", "error") and s.get("final_residual") is not None
                  and math.isfinite(s["final_residual"]))
        out.setdefault(base, None)
        if finite and (out[base] is None or s["sweep_value"] > out[base]):
            out[base] = s["sweep_value"]
    return out


def run_experiment(cfg: ExperimentConfig, jobs: Optional[int] = None, reference=None) -> dict:
    """Generate the instance, compute a reference, run every method (and
    sweep point), write CSVs, ``report.json`` and optional SVG plots."""
    out_dir = Path(cfg.out_dir)
    trace_dir = cfg.trace_path
    try:
        trace_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {trace_dir}: {exc}") from exc
    problem = gen_problem(cfg.instance, cfg.moduli)
    spec = problem_spectral(problem)
    ref = reference if reference is not None else reference_solution(problem)
    runs = expand_runs(cfg, spec)
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    env_cap = os.environ.get("BUNDLE_PD_JOBS")
    if env_cap:
        jobs = min(jobs, max(1, int(env_cap)))
    if jobs > 1 and len(runs) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(runs))) as pool:
            futs = [pool.submit(execute_run, problem, ref, r, trace_dir, spec, cfg.check_contraction)
                    for r in runs]
            summaries = [f.result() for f in futs]
    else:
        summaries = [execute_run(problem, ref, r, trace_dir, spec, cfg.check_contraction) for r in runs]
    for s, r in zip(summaries, runs):
        s["base_label"] = r.base_label

    report = {
        "instance": dataclasses.asdict(cfg.instance),
        "moduli": cfg.moduli,
        "spectral": {"beta": spec.beta, "mu": spec.mu, "norm_A": spec.norm_A,
                     "sigma_A": spec.sigma_A, "rank_A": spec.rank_A},
        "reference": {"F_star": ref.F_star, "kkt_residual": ref.kkt_residual,
                      "flagged": ref.flagged, "method": ref.method},
        "budget": cfg.budget,
        "runs": [{k: v for k, v in s.items() if k != "residual"} for s in summaries],
    }
    if cfg.sweep_axis is not None:
        report["sweep"] = {"axis": cfg.sweep_axis, "values": list(cfg.sweep_values),
                           "thresholds": divergence_thresholds(summaries, cfg.sweep_values)}
    if cfg.plot_svg:
        plots = []
        series = {s["label"]: (list(range(len(s["residual"]))), s["residual"])
                  for s in summaries if "residual" in s}
        if series and cfg.sweep_axis is None:
            plots.append(svg_line_plot(series, out_dir / "residual.svg", "optimality residual",
                                       "iteration", "residual").name)
        if cfg.sweep_axis is not None:
            sw = {}
            for s in summaries:
                xs, ys = sw.setdefault(s["base_label"], ([], []))
                xs.append(s["sweep_value"])
                r = s.get("final_residual")
                ys.append(r if (r is not None and s.get("status") != "diverged") else float("nan"))
            plots.append(svg_line_plot(sw, out_dir / "sweep.svg", f"final residual after {cfg.budget} iterations",
                                       f"step multiplier ({cfg.sweep_axis})", "residual", logx=True).name)
        report["plots"] = plots
    cfg.report_path.write_text(json.dumps(report, indent=2, sort_keys=True, default=_json_default)
                                         + "\n")
    report["_summaries"] = summaries
    return report


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not serializable: {type(o)}")
