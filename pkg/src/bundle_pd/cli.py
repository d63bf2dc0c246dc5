"""Command-line entry point: ``bundle-pd {gen,run,sweep,verify}``.

Exit codes: 0 success, 1 failed verification checks, 2 configuration
error, 3 infrastructure error (I/O, worker crash). Per-run divergence is
recorded in the report and does not change the exit code.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .experiments import ConfigError, ExperimentConfig, InstanceConfig, run_experiment, write_instance
from .verify import SUITES, run_suite

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_INFRA = 0, 1, 2, 3


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad value list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bundle-pd", description="Bundle primal-dual solvers")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a seeded least-squares instance to a directory")
    g.add_argument("--config", help="experiment config whose instance block is used")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    for name, typ in (("n", int), ("m", int), ("N", int), ("lambda1", float), ("lambda2", float)):
        g.add_argument(f"--{name}", type=typ)

    for name, helptext in (("run", "run every configured method"),
                           ("sweep", "run every method over a step-size grid")):
        r = sub.add_parser(name, help=helptext)
        r.add_argument("--config", required=True)
        r.add_argument("--out", help="output directory (overrides the config)")
        r.add_argument("--seed", type=int, help="instance seed (overrides the config)")
        r.add_argument("--jobs", type=int, help="worker processes (default: BUNDLE_PD_JOBS or 1)")
        if name == "sweep":
            r.add_argument("--axis", choices=("c_p_inv", "c_d_inv"))
            r.add_argument("--values", type=_parse_values)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("--suite", required=True, choices=sorted(SUITES))
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", help="write the JSON reports to this file")
    return p


def _cmd_gen(args) -> int:
    base = ExperimentConfig.load(args.config).instance if args.config else InstanceConfig()
    fields = {k: getattr(args, k) for k in ("n", "m", "N", "lambda1", "lambda2", "seed")
              if getattr(args, k) is not None}
    cfg = InstanceConfig(**{**base.__dict__, **fields, "path": None})
    write_instance(cfg, args.out)
    print(f"wrote instance to {args.out}")
    return EXIT_OK


def _cmd_run(args, sweep: bool) -> int:
    cfg = ExperimentConfig.load(args.config)
    cfg = cfg.with_overrides(seed=args.seed, out_dir=args.out,
                             sweep_axis=getattr(args, "axis", None),
                             sweep_values=getattr(args, "values", None))
    if sweep and cfg.sweep_axis is None:
        raise ConfigError("sweep needs an axis (config 'sweep' block or --axis/--values)")
    t0 = time.perf_counter()
    report = run_experiment(cfg, jobs=args.jobs)
    for s in report["runs"]:
        res = s.get("final_residual")
        res_txt = "nan" if res is None else f"{res:.3e}"
        print(f"{s['label']:<32} {s['status']:<10} residual={res_txt}")
    if "sweep" in report:
        print("largest finite multiplier: " + json.dumps(report["sweep"]["thresholds"]))
    print(f"report: {cfg.report_path} ({time.perf_counter() - t0:.1f}s)")
    return EXIT_OK


def _cmd_verify(args) -> int:
    reports = run_suite(args.suite, args.seed)
    lines = [r.to_json() for r in reports]
    for line in lines:
        print(line)
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n")
    failed = [r for r in reports if not r.passed]
    print(f"{args.suite}: {len(reports) - len(failed)}/{len(reports)} checks passed", file=sys.stderr)
    return EXIT_OK if not failed else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            return _cmd_gen(args)
        if args.command in ("run", "sweep"):
            return _cmd_run(args, sweep=args.command == "sweep")
        return _cmd_verify(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, RuntimeError) as exc:
        print(f"infrastructure error: {exc}", file=sys.stderr)
        return EXIT_INFRA


if __name__ == "__main__":
    sys.exit(main())
