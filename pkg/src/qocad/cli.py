"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 no convergence.
"""

from __future__ import annotations

import argparse
import logging
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import analytic, autograd, gradcheck, io, optimize, problems
from .autograd import GradientMode
from .config import load_config
from .errors import QocError
from .model import inverse_bounded_map
from .propagation import propagate_state

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2
MAX_BENCH_DIM = 2048

log = logging.getLogger("qocad")


def _err(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_ERROR


def _overrides(args) -> dict:
    return {
        "seed": getattr(args, "seed", None),
        "max_iters": getattr(args, "max_iters", None),
        "optimizer": getattr(args, "optimizer", None),
        "grad_path": getattr(args, "grad_path", None),
        "out_dir": getattr(args, "out_dir", None),
    }


def _initial_v(run_cfg):
    if run_cfg.initial_pulses is None:
        return None
    data = io.read_pulses(run_cfg.initial_pulses)
    prob = run_cfg.problem
    if data["u"].shape != prob.shape:
        raise QocError(f"initial pulses have shape {data['u'].shape}, problem needs {prob.shape}")
    return inverse_bounded_map(data["u"], prob.bounds)


# --- run --------------------------------------------------------------------------


def write_outputs(out_dir: Path, problem, result, opt_cfg, wall_s: float) -> None:
    """Write all run outputs into a scratch directory, then move them into place."""
    out_dir.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(dir=out_dir) as tmp:
        tmp = Path(tmp)
        io.write_pulses(tmp / "pulses.csv", result.u, problem.grid.dt, problem.hamiltonian.names, problem.bounds)
        io.write_trace(tmp / "trace.jsonl", result.trace)
        report = {
            "problem": io.problem_summary(problem),
            "optimizer": {k: getattr(opt_cfg, k) for k in opt_cfg.__dataclass_fields__},
            "termination": result.reason,
            "iterations": result.iterations,
            "fidelity": result.fidelity,
            "total_cost": result.trace[-1].total,
            "terms": result.report.as_dict()["terms"],
            "events": result.events,
            "wall_seconds": wall_s,
        }
        io.write_report(tmp / "report.json", report)
        names = ["pulses.csv", "trace.jsonl", "report.json"]
        if problem.mode == "state":
            traj = propagate_state(problem.initial_block(), problem.hamiltonian, result.u, problem.grid)
            io.write_populations(tmp / "populations.csv", traj, problem.grid.times())
            names.append("populations.csv")
        for name in names:
            shutil.move(str(tmp / name), str(out_dir / name))


def cmd_run(args) -> int:
    try:
        run_cfg = load_config(args.config, _overrides(args))
        v0 = _initial_v(run_cfg)
    except (QocError, ValueError) as exc:
        return _err(str(exc))
    prob, opt_cfg = run_cfg.problem, run_cfg.optimizer
    every = max(1, opt_cfg.max_iterations // 20)

    def progress(rec):
        if rec.iteration % every == 0 or rec.iteration == 1:
            log.info("iter %5d  cost %.6e  fidelity %.6f  |g| %.3e", rec.iteration, rec.total,
                     rec.fidelity, rec.grad_norm)

    start = time.perf_counter()
    try:
        result = optimize.run(prob, opt_cfg, initial_v=v0, callback=progress)
    except QocError as exc:
        return _err(str(exc))
    wall = time.perf_counter() - start
    write_outputs(run_cfg.out_dir, prob, result, opt_cfg, wall)
    print(f"{prob.name}: {result.reason} after {result.iterations} iterations, "
          f"fidelity {result.fidelity:.6f}, cost {result.trace[-1].total:.6e}  -> {run_cfg.out_dir}")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


# --- grad-check -------------------------------------------------------------------------


def cmd_grad_check(args) -> int:
    try:
        run_cfg = load_config(args.config, _overrides(args))
        prob = run_cfg.problem
        v = _initial_v(run_cfg)
        if v is None:
            v = optimize.initial_pulses(prob, run_cfg.seed)
        tol = gradcheck.Tolerances(args.tol_exact, args.tol_approx, args.tol_matched)
        corrupt = (lambda g: g * 1.01 + 1e-3) if args.corrupt_gradient else None
        report = gradcheck.check_gradients(prob, v, tol, corrupt=corrupt)
    except (QocError, ValueError) as exc:
        return _err(str(exc))
    for line in report.lines():
        print(line)
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_ERROR


# --- bench ---------------------------------------------------------------------------------


def time_iteration(problem, repeats: int = 1, grad_path: str = "autograd-exact") -> float:
    """Best wall-clock milliseconds of one cost + gradient evaluation."""
    v = optimize.initial_pulses(problem, 0)
    best = np.inf
    for _ in range(repeats):
        t = time.perf_counter()
        if grad_path == "analytic":
            analytic.analytic_value_and_grad(problem, v)
        else:
            mode = GradientMode.EXACT if grad_path == "autograd-exact" else GradientMode.APPROX
            autograd.value_and_grad(problem, v, mode)
        best = min(best, time.perf_counter() - t)
    return best * 1e3


def bench_problem(dim: int, mode: str, steps: int):
    n = int(round(np.log2(dim)))
    if 2**n != dim or not 1 <= n <= problems.MAX_CHAIN:
        raise QocError(f"benchmark dimensions are powers of two between 2 and {MAX_BENCH_DIM}, got {dim}")
    target = "hadamard" if mode == "unitary" else "ghz"
    return problems.build_spin_chain(n, target, steps=steps, total_time=0.2 * steps)


def run_bench(dims, modes, steps: int, repeats: int = 1, grad_path: str = "autograd-exact"):
    rows = []
    for mode in modes:
        for dim in dims:
            ms = time_iteration(bench_problem(dim, mode, steps), repeats, grad_path)
            rows.append((dim, mode, ms))
    return rows


def scaling_ratio(dim: int, mode: str, steps: int, repeats: int = 3, grad_path: str = "autograd-exact") -> float:
    t1 = time_iteration(bench_problem(dim, mode, steps), repeats, grad_path)
    t2 = time_iteration(bench_problem(dim, mode, 2 * steps), repeats, grad_path)
    return t2 / t1


def cmd_bench(args) -> int:
    try:
        dims = [int(d) for d in args.dims.split(",")]
        if any(d > MAX_BENCH_DIM for d in dims):
            raise QocError(f"benchmark dimensions are capped at {MAX_BENCH_DIM}")
        modes = ["unitary", "state"] if args.mode == "both" else [args.mode]
        rows = run_bench(dims, modes, args.steps, args.repeats, args.grad_path)
        ratio = scaling_ratio(args.scaling_dim, modes[0], args.steps, max(3, args.repeats), args.grad_path)
    except (QocError, ValueError) as exc:
        return _err(str(exc))
    lines = ["dim,mode,ms_per_iter"] + [f"{d},{m},{io.fmt(ms)}" for d, m, ms in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    ok = 1.6 <= ratio <= 2.6
    print(f"# time(2N)/time(N) at dim {args.scaling_dim}: {ratio:.3f} ({'linear' if ok else 'NOT linear'})")
    return EXIT_OK if ok else EXIT_ERROR


# --- describe ----------------------------------------------------------------------------------


def describe_text(problem) -> str:
    s = io.problem_summary(problem)
    out = [
        f"problem   {s['name']} ({s['mode']} mode)",
        f"l         {s['dim']}",
        f"M         {len(s['controls'])}  ({', '.join(s['controls'])})",
        f"N         {s['steps']}",
        f"dt        {s['dt']:.6g} ns",
        "costs:",
    ]
    out += [f"  {t['label']:32s} weight {t['weight']:g}" for t in s["terms"]]
    if s["parameters"]:
        out.append("parameters:")
        out += [f"  {k:16s} {p['value']:g} {p['unit']}".rstrip() for k, p in s["parameters"].items()]
    return "\n".join(out)


def cmd_describe(args) -> int:
    if args.name not in problems.BUILDERS:
        return _err(f"unknown problem {args.name!r}; builtins: {', '.join(problems.BUILDERS)}")
    try:
        prob = problems.build(args.name)
    except QocError as exc:
        return _err(str(exc))
    print(describe_text(prob))
    return EXIT_OK


# --- entry point --------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qocad", description="Quantum optimal control with automatic differentiation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log optimizer progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("config", help="TOML run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--max-iters", type=int)
        p.add_argument("--optimizer", choices=optimize.METHODS)
        p.add_argument("--grad-path", choices=optimize.GRAD_PATHS)
        p.add_argument("--out-dir")

    p = sub.add_parser("run", help="optimize pulses for a configured problem")
    run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("grad-check", help="compare gradient paths against finite differences")
    run_flags(p)
    p.add_argument("--tol-exact", type=float, default=1e-6)
    p.add_argument("--tol-approx", type=float, default=1e-10)
    p.add_argument("--tol-matched", type=float, default=1e-6)
    p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("bench", help="time one iteration of the spin-chain problem per dimension")
    p.add_argument("--dims", default="2,4,8,16,32,64,128,256")
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--mode", choices=["unitary", "state", "both"], default="both")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--scaling-dim", type=int, default=16)
    p.add_argument("--grad-path", choices=optimize.GRAD_PATHS, default="autograd-exact")
    p.add_argument("--out", help="also write the CSV here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("describe", help="print a builtin problem's dimensions, costs and parameters")
    p.add_argument("name")
    p.set_defaults(func=cmd_describe)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
