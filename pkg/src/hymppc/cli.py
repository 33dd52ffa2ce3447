"""Command-line front end: validate / solve / mpc / bench.

Exit codes: 0 ok, 1 validation or solve-quality failure, 2 usage or I/O
error, 3 infeasible candidate sequence.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .errors import Exhausted, IterationLimit, NoRoot, SingularSystem
from .execution import (execution_summary, write_summary_json,
                        write_trace_csv)
from .model import benchmark_path, load_model, validate
from .mpc import MpcLimits, closed_loop_run, iteration_bound
from .sim import Simulator
from .solver import SolverOptions, jpmpa, jpmpb

EXIT_OK = 0
EXIT_QUALITY = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _load(path_arg: str | None):
    path = Path(path_arg) if path_arg else benchmark_path()
    if not path.exists():
        print(f"error: config file not found: {path}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    try:
        return load_model(path)
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: malformed config {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _parse_seq(arg: str) -> tuple[str, ...]:
    toks = tuple(t.strip() for t in arg.split(",") if t.strip())
    if not toks:
        print(f"error: empty sequence {arg!r}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    return toks


def _parse_x0(arg: str, n_x: int) -> np.ndarray:
    try:
        x0 = np.array([float(t) for t in arg.split(",")])
    except ValueError:
        print(f"error: malformed state vector {arg!r}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    if x0.shape != (n_x,):
        print(f"error: expected {n_x} state components, got {len(x0)}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    return x0


def cmd_validate(args) -> int:
    model = _load(args.config)
    rep = validate(model)
    print(rep)
    if rep.errors:
        return EXIT_QUALITY
    if rep.warnings and args.strict:
        return EXIT_QUALITY
    return EXIT_OK


def cmd_solve(args) -> int:
    model = _load(args.config)
    q = _parse_seq(args.seq)
    sigma = _parse_seq(args.inputs) if args.inputs else ()
    if len(sigma) != len(q) - 1:
        print(f"error: need {len(q) - 1} inputs for {len(q)} modes, got {len(sigma)}",
              file=sys.stderr)
        return EXIT_USAGE
    for m in q:
        if m not in model.modes:
            print(f"error: unknown mode {m!r}", file=sys.stderr)
            return EXIT_USAGE
    x0 = _parse_x0(args.x0, model.n_x)
    options = SolverOptions(seed=args.seed)
    try:
        if args.free_final:
            u0, score, sol = jpmpb(model, x0, sigma, q, options, t_scale=args.horizon)
            label = "J_m"
        else:
            u0, score, sol = jpmpa(model, x0, sigma, q, args.horizon, options)
            label = "J"
    except (NoRoot, SingularSystem) as exc:
        print(f"infeasible candidate: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(sol.execution, out / "trace.csv", model.n_x, model.n_u)
    summary = execution_summary(model, sol.execution)
    summary["u0"] = list(sol.u0)
    summary["diagnostics"] = {k: v for k, v in sol.diagnostics.items()}
    write_summary_json(summary, out / "summary.json")
    print(f"{label} = {_fmt(score)}")
    print(f"u0 = [{', '.join(_fmt(v) for v in u0)}]")
    if sol.jump_times:
        print("jump times = " + ", ".join(_fmt(t) for t in sol.jump_times))
    print(f"residual_inf = {sol.diagnostics['residual_inf']:.3e}")
    return EXIT_OK


def cmd_mpc(args) -> int:
    model = _load(args.config)
    x0 = _parse_x0(args.x0, model.n_x)
    q0 = args.q0 or sorted(model.modes)[0]
    if q0 not in model.modes:
        print(f"error: unknown mode {q0!r}", file=sys.stderr)
        return EXIT_USAGE
    options = SolverOptions(seed=args.seed)
    limits = MpcLimits(max_depth=args.max_depth)
    plant = Simulator(model, x0, q0)
    try:
        trace = closed_loop_run(model, plant, x0, q0, horizon=args.horizon,
                                dt=args.dt, steps=args.steps, limits=limits,
                                options=options, jobs=args.jobs,
                                measure_time=args.timings)
    except (Exhausted, IterationLimit) as exc:
        print(f"closed loop failed: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = (["step", "t_wall", "q"] + [f"x_{i + 1}" for i in range(model.n_x)]
              + [f"u_{i + 1}" for i in range(model.n_u)]
              + ["sigma_ap", "J", "iterations", "solve_ms"])
    with open(out / "closed_loop.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for r in trace.records:
            w.writerow([r.step, _fmt(r.t), r.q] + [_fmt(v) for v in r.x]
                       + [_fmt(v) for v in r.u]
                       + [r.sigma_ap or "", _fmt(r.J), r.iterations, _fmt(r.solve_ms)])

    summary = {
        "steps": args.steps,
        "final_q": trace.final_q,
        "final_x": list(trace.final_x) if trace.final_x is not None else None,
        "max_iterations_observed": trace.max_iterations,
    }
    h_min = model.min_jump_cost()
    if trace.records and np.isfinite(h_min):
        bound = iteration_bound(trace.records[0].J, h_min,
                                len(model.modes), len({t.input for t in model.transitions}))
        summary["iteration_bound_first_step"] = bound
    if args.verbose:
        summary["per_step"] = [
            {"step": r.step, "q": r.q, "J": r.J, "iterations": r.iterations,
             "sigma_ap": r.sigma_ap, "solve_ms": r.solve_ms}
            for r in trace.records
        ]
    write_summary_json(summary, out / "summary.json")

    if trace.final_x is not None:
        print(f"final state: q={trace.final_q}, x=[{', '.join(_fmt(v) for v in trace.final_x)}]")
    print(f"total stage score (sum of per-step J): {_fmt(trace.total_cost)}")
    print(f"max iterations observed: {trace.max_iterations}"
          + (f" (bound {summary['iteration_bound_first_step']})"
             if "iteration_bound_first_step" in summary else ""))
    return EXIT_OK


def cmd_bench(args) -> int:
    model = _load(args.config)
    results = bench_mod.run_all(model, seed=args.seed)
    width = max(len(name) for name, _, _ in results)
    ok_all = True
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        ok_all &= ok
        print(f"{name:<{width}}  {status}  {detail}")
    print(f"{'overall':<{width}}  {'PASS' if ok_all else 'FAIL'}")
    return EXIT_OK if ok_all else EXIT_QUALITY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hymppc",
                                description="Hybrid MPC for affine hybrid systems")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("config", nargs="?", default=None,
                            help="model config JSON (default: shipped benchmark)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--verbose", action="store_true")

    sp = sub.add_parser("validate", help="validate a model config")
    common(sp)
    sp.add_argument("--strict", action="store_true",
                    help="treat warnings as errors")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("solve", help="solve one fixed discrete sequence")
    common(sp)
    sp.add_argument("--seq", required=True, help="comma-separated mode sequence")
    sp.add_argument("--inputs", default=None, help="comma-separated input sequence")
    sp.add_argument("--free-final", action="store_true",
                    help="free final time, no terminal cost")
    sp.add_argument("--horizon", type=float, default=2.0)
    sp.add_argument("--x0", default="0,0")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("mpc", help="closed-loop receding-horizon run")
    common(sp)
    sp.add_argument("--horizon", type=float, default=2.0)
    sp.add_argument("--dt", type=float, default=0.1)
    sp.add_argument("--steps", type=int, default=40)
    sp.add_argument("--x0", default="0,0")
    sp.add_argument("--q0", default=None)
    sp.add_argument("--max-depth", type=int, default=4)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--timings", action="store_true",
                    help="record wall-clock solve times (breaks bit-reproducibility)")
    sp.set_defaults(func=cmd_mpc)

    sp = sub.add_parser("bench", help="run the quantitative acceptance checks")
    common(sp)
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
