"""Command-line entry point ``rothe-px``.

Exit codes: 0 success, 1 invariant/assertion failure, 2 configuration
error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .barrier import KINDS, containment_check, growth_function, integrate_barrier
from .config import Problem, RunConfig, load_config, parse_config
from .elliptic import ResolventProblem, solve_resolvent, solve_stationary, solve_torsion
from .errors import ConfigError, DomainError, SolverError
from .output import CsvTable, emit_results, nodal_table, versions
from .rothe import TimeGrid, blowup_energy, cauchy_two_grid, energy_inequality_check, run
from .stabilization import stabilize
from .verify import SUITES, run_verify

log = logging.getLogger("rothe_px")

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
DEFAULT_OUT = "rothe-px-out"


class _Failure(Exception):
    """An invariant check failed; outputs have been written."""


def _load(args) -> RunConfig:
    if getattr(args, "config", None) is None:
        raise ConfigError("--config is required for this command")
    path = str(args.config)
    if not Path(path).exists() and not path.endswith(".json"):
        cfg = parse_config({"problem": path})  # a bare registry id
    else:
        cfg = load_config(path)
    if getattr(args, "seed", None) is not None:
        cfg.settings["seed"] = int(args.seed)
    return cfg


def _run_json(cfg: RunConfig | None, command: str, wall: dict, **extra) -> dict:
    payload = {
        "command": command,
        "versions": versions(),
        "wall_times": wall,
    }
    if cfg is not None:
        payload["config"] = cfg.echo()
        payload["seed"] = cfg.seed
        payload["problem"] = cfg.problem
    payload.update(extra)
    return payload


def _say(args, msg: str):
    if not getattr(args, "quiet", False):
        print(msg)


def cmd_elliptic(args) -> int:
    cfg = _load(args)
    pb = Problem(cfg)
    pb.require("mesh", "exponent")
    t0 = time.perf_counter()
    task = cfg.get("task", "resolvent")
    tol, maxit = cfg.tolerance, int(cfg.get("max_iterations", 200))
    artifacts = {}
    if task == "torsion":
        levels = cfg.get("levels") or [cfg.get("mu", 1.0)]
        reports = [solve_torsion(float(mu), pb.exponent, tolerance=tol, max_iterations=maxit) for mu in levels]
        artifacts["torsion.csv"] = CsvTable(
            ["level", "linf", "iterations", "residual"],
            [[float(mu), r.solution.linf(), r.iterations, r.final_residual_norm] for mu, r in zip(levels, reports)],
        )
        report = reports[0]
        extra = {"levels": [float(v) for v in levels], "reports": [r.to_dict() for r in reports]}
    elif task == "resolvent":
        pb.require("rhs", "lambda")
        report = solve_resolvent(ResolventProblem(float(cfg["lambda"]), pb.rhs, pb.exponent, tol, maxit, pb.reaction))
        reports = [report]
        extra = report.to_dict()
    else:
        raise ConfigError(f"task {task!r} is not an elliptic task (use resolvent or torsion)")
    artifacts["solution.csv"] = nodal_table(report.solution)
    artifacts["report.json"] = {
        "iterations": report.iterations,
        "residual": report.final_residual_norm,
        "energy_trace": report.energy_history,
        "converged": all(r.converged for r in reports),
        "task": task,
        **extra,
    }
    artifacts["run.json"] = _run_json(cfg, "elliptic", {"solve": time.perf_counter() - t0})
    emit_results(artifacts, args.out)
    if not all(r.converged for r in reports):
        raise SolverError(f"elliptic solve did not converge: {report.message}")
    _say(args, f"{task}: {report.iterations} iterations, residual {report.final_residual_norm:.3e}")
    return EXIT_OK


def _snapshot_artifacts(run_, stride: int) -> dict:
    out = {}
    if stride > 0:
        last = len(run_.iterates) - 1
        for n in sorted(set(range(0, last + 1, stride)) | {last}):
            out[f"snapshot_{n}.csv"] = nodal_table(run_.iterates[n])
    return out


def cmd_parabolic(args) -> int:
    cfg = _load(args)
    pb = Problem(cfg)
    pb.require("mesh", "exponent", "initial", "T", "N")
    t0 = time.perf_counter()
    grid = TimeGrid(float(cfg["T"]), int(cfg["N"]))
    r = run(pb.initial, grid, pb.exponent, source=pb.source, reaction=pb.reaction, tolerance=cfg.tolerance)
    wall = {"run": time.perf_counter() - t0}
    rows = [[n, float(grid.times[n]), *map(float, r.diagnostics[n])] for n in range(len(r.iterates))]
    artifacts = {"timeseries.csv": CsvTable(["n", "t", "linf", "l2", "modular_gradient", "step_rate", "energy"], rows)}
    artifacts.update(_snapshot_artifacts(r, int(cfg.get("snapshot_stride", 0))))
    checks = {}
    failures = []
    energy = energy_inequality_check(r)
    checks["energy_inequality"] = {"lhs": energy.lhs, "rhs": energy.rhs, "slack": energy.slack, "ok": energy.ok}
    if not energy.ok:
        failures.append("discrete energy inequality violated")
    if r.barriers:
        c = containment_check(r, r.barriers)
        checks["containment"] = {"ok": c.ok, "worst_violation": c.worst_violation, "worst_step": c.worst_step}
        if not c.ok:
            failures.append(f"barrier containment violated at step {c.worst_step}")
    if pb.reaction is not None:
        coeffs = pb.reaction.description.get("coeffs", [])
        degree = len(np.trim_zeros(np.asarray(coeffs, dtype=float), "b")) - 1
        if degree > 1:
            checks["blowup_energy_initial"] = blowup_energy(r.iterates[0], pb.exponent, float(degree))
    artifacts["run.json"] = _run_json(cfg, "parabolic", wall, run=r.metadata(), checks=checks, failures=failures)
    emit_results(artifacts, args.out)
    if r.failed:
        raise SolverError(r.message, step=r.failure_step)
    _say(args, f"parabolic: {r.message}; {len(r.iterates) - 1} steps; certificate: {r.certificate or 'n/a'}")
    if r.blowup_suspected:
        _say(args, "blow-up suspected")
    if failures:
        raise _Failure("; ".join(failures))
    return EXIT_OK


def _stationary_reaction(pb: Problem):
    if pb.reaction is not None:
        return pb.reaction
    if pb.source is not None:
        return pb.source_as_reaction()
    return None


def cmd_steady(args) -> int:
    cfg = _load(args)
    pb = Problem(cfg)
    pb.require("mesh", "exponent")
    t0 = time.perf_counter()
    rep = solve_stationary(_stationary_reaction(pb), pb.exponent, tolerance=cfg.tolerance,
                           max_iterations=int(cfg.get("max_iterations", 200)))
    artifacts = {
        "solution.csv": nodal_table(rep.solution),
        "report.json": {"iterations": rep.iterations, "residual": rep.final_residual_norm,
                        "energy_trace": rep.energy_history, "converged": rep.converged},
        "run.json": _run_json(cfg, "steady", {"solve": time.perf_counter() - t0}),
    }
    emit_results(artifacts, args.out)
    if not rep.converged:
        raise SolverError(f"stationary solve did not converge: {rep.message}")
    _say(args, f"steady: {rep.iterations} iterations, |u|_inf = {rep.solution.linf():.6g}")
    return EXIT_OK


def cmd_stabilize(args) -> int:
    cfg = _load(args)
    pb = Problem(cfg)
    pb.require("mesh", "exponent", "initial", "T", "N")
    f = _stationary_reaction(pb)
    if f is None:
        from .reaction import polynomial_reaction

        f = polynomial_reaction([0.0])
    t0 = time.perf_counter()
    rep = stabilize(pb.initial, f, pb.exponent, float(cfg["T"]), int(cfg["N"]),
                    threshold=float(cfg.get("threshold", 1e-5)), tolerance=cfg.tolerance, mu=cfg.get("mu"))
    rows = [[n, float(t), float(d), float(g), float(m)]
            for n, (t, d, g, m) in enumerate(zip(rep.times, rep.distance_series, rep.sandwich_gap, rep.min_value))]
    summary = {
        "converged": rep.converged,
        "converged_step": rep.converged_step,
        "threshold": rep.threshold,
        "monotonicity_violations": rep.monotonicity_violations,
        "sandwich_ok": rep.sandwich.ok,
        "mu": rep.sandwich.mu,
        "observed_rate": rep.observed_rate,
        "notes": rep.notes,
    }
    artifacts = {
        "stabilization.csv": CsvTable(["n", "t", "dist_linf", "sandwich_gap", "min_value"], rows),
        "steady_state.csv": nodal_table(rep.steady_state),
        "run.json": _run_json(cfg, "stabilize", {"run": time.perf_counter() - t0}, summary=summary),
    }
    emit_results(artifacts, args.out)
    _say(args, f"stabilize: distance {rep.distance_series[0]:.3e} -> {rep.distance_series[-1]:.3e}, "
               f"converged={rep.converged}")
    if not rep.ok:
        raise _Failure("no-expansion or sandwich property violated")
    return EXIT_OK


def cmd_barrier(args) -> int:
    L = growth_function(args.growth)
    t0 = time.perf_counter()
    try:
        traj = integrate_barrier(L, float(args.kappa), float(args.T), float(args.dt), kind=args.kind)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    artifacts = {
        "barrier.csv": CsvTable(["t", "v"], [[float(t), float(v)] for t, v in zip(traj.times, traj.values)]),
        "run.json": _run_json(None, "barrier", {"integrate": time.perf_counter() - t0},
                              growth=args.growth, kappa=float(args.kappa), T=float(args.T), dt=float(args.dt),
                              kind=traj.kind, t_max_estimate=traj.t_max_estimate if traj.blew_up else None,
                              failed=traj.failed, message=traj.message),
    }
    emit_results(artifacts, args.out)
    if traj.blew_up:
        _say(args, f"barrier blows up near t = {traj.t_max_estimate:.6g}")
    else:
        _say(args, f"barrier: v(T) = {traj.values[-1]:.17g}")
    if traj.failed:
        raise SolverError(traj.message)
    return EXIT_OK


def cmd_cauchy(args) -> int:
    cfg = _load(args)
    pb = Problem(cfg)
    pb.require("mesh", "exponent", "initial", "T", "N")
    refinements = int(args.refinements if args.refinements is not None else cfg.get("refinements", 2))
    t0 = time.perf_counter()
    rep = cauchy_two_grid(pb.initial, float(cfg["T"]), int(cfg["N"]), pb.exponent, source=pb.source,
                          reaction=pb.reaction, tolerance=cfg.tolerance, refinements=refinements)
    rows = [[k, rep.steps[k], rep.steps[k + 1], d] for k, d in enumerate(rep.deltas)]
    artifacts = {
        "cauchy.csv": CsvTable(["k", "N_k", "N_k_plus_1", "delta"], rows),
        "run.json": _run_json(cfg, "cauchy", {"runs": time.perf_counter() - t0},
                              deltas=rep.deltas, ratios=rep.ratios, ok=rep.ok),
    }
    emit_results(artifacts, args.out)
    _say(args, "cauchy: deltas " + ", ".join(f"{d:.3e}" for d in rep.deltas))
    if not rep.ok:
        raise _Failure("Cauchy trend violated: some delta_{k+1} > delta_k")
    return EXIT_OK


def cmd_verify(args) -> int:
    seed = int(args.seed) if getattr(args, "seed", None) is not None else 0
    try:
        report = run_verify(args.suite, seed=seed, expect_fail=args.expect_fail)
    except KeyError as exc:
        raise ConfigError(f"unknown suite {args.suite!r}") from exc
    out = getattr(args, "out", None) or "."
    emit_results({"verify.json": report}, out)
    for p in report["properties"]:
        _say(args, f"{'PASS' if p['passed'] else 'FAIL'}  {p['suite']:<14} {p['name']}  (slack {p['slack']:.3e})")
    if not report["passed"]:
        raise _Failure("verify: some properties failed")
    return EXIT_OK


COMMANDS = {
    "elliptic": cmd_elliptic,
    "parabolic": cmd_parabolic,
    "steady": cmd_steady,
    "stabilize": cmd_stabilize,
    "barrier": cmd_barrier,
    "cauchy": cmd_cauchy,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="run configuration (JSON file or bundled problem id)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed recorded in outputs")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="suppress console output")

    parser = argparse.ArgumentParser(prog="rothe-px", parents=[common],
                                     description="Rothe-method solvers for the p(x)-Laplacian evolution.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("elliptic", parents=[common], help="resolvent or torsion problem")
    sub.add_parser("parabolic", parents=[common], help="Rothe time stepping")
    sub.add_parser("steady", parents=[common], help="stationary problem with a nonincreasing reaction")
    sub.add_parser("stabilize", parents=[common], help="long-time convergence to the steady state")
    b = sub.add_parser("barrier", parents=[common], help="integrate a barrier ODE v' = L(v)")
    b.add_argument("--growth", required=True,
                   help="zero, one, linear, affine, quadratic, cubic or poly:c0,c1,...")
    b.add_argument("--kappa", type=float, required=True)
    b.add_argument("--T", type=float, required=True)
    b.add_argument("--dt", type=float, required=True)
    b.add_argument("--kind", choices=KINDS, default="H1-two-sided")
    c = sub.add_parser("cauchy", parents=[common], help="two-grid Cauchy comparison")
    c.add_argument("--refinements", type=int, default=None)
    v = sub.add_parser("verify", parents=[common], help="run invariant suites")
    v.add_argument("suite", nargs="?", default="all", choices=["all", *SUITES])
    v.add_argument("--expect-fail", action="store_true", help="inject a sign flip into the Hoelder check")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("config", None), ("seed", None), ("quiet", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    if not hasattr(args, "out"):
        args.out = None if args.command == "verify" else DEFAULT_OUT
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except _Failure as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except json.JSONDecodeError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
