"""Command-line front end: solve, verify, social-opt, poa, sweep.

Outputs are batch data: profiles and reports as JSON, traces and sweeps
as CSV with numbers printed to 17 significant digits so a rerun with the
same scenario and seed is byte-identical.  Exit codes: 0 success, 2
validation error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, solvers
from .game import FlowProfile, player_costs, social_cost
from .scenario import Scenario, ScenarioError, SweepSpec, bundled_scenario_path, config_hash, load_scenario

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serialisable: {type(obj)!r}")


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")


def _load_scenario_arg(arg: str) -> Scenario:
    path = Path(arg)
    if not path.exists():
        bundled = bundled_scenario_path(arg)
        if bundled.exists():
            path = bundled
    return load_scenario(path)


def _merged_config(scenario: Scenario, args) -> solvers.SolverConfig:
    return scenario.solver_config(
        gamma=args.gamma,
        epsilon=args.eps,
        max_iterations=args.max_iter,
        seed=args.seed,
    )


def _write_trace(path: Path, report: solvers.SolverReport, scenario: str, seed: int, digest: str):
    trace = report.trace
    n = trace.player_costs.shape[1] if trace.player_costs.size else 0
    header = ["iter", "step_norm", "social_cost"] + [f"cost_p{i + 1}" for i in range(n)]
    lines = [f"# scenario={scenario},seed={seed},config_hash={digest}"]
    lines.append(",".join(header))
    for row in range(len(trace.iterations)):
        cells = [str(int(trace.iterations[row])), _fmt(trace.step_norm[row]),
                 _fmt(trace.social_cost[row])]
        cells += [_fmt(c) for c in trace.player_costs[row]]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def cmd_solve(args) -> int:
    scenario = _load_scenario_arg(args.scenario)
    instance = scenario.build_instance()
    config = _merged_config(scenario, args)
    config.trace = args.trace is not None
    seed = config.seed
    digest = config_hash(scenario.name, config, seed)

    start = FlowProfile.uniform(instance)
    runner = solvers.itproxpt if args.solver == "itproxpt" else solvers.sird
    report = runner(instance, start, config)

    if args.trace is not None:
        _write_trace(Path(args.trace), report, scenario.name, seed, digest)

    check = analysis.kkt_verify(instance, report.profile)
    out = Path(args.out) if args.out else Path(f"{scenario.name}_solution.json")
    _write_json(out, {
        "scenario": scenario.name,
        "seed": seed,
        "config_hash": digest,
        "solver": args.solver,
        "gamma": report.gamma,
        "epsilon": report.epsilon,
        "iterations": report.iterations,
        "stop_reason": report.stop_reason,
        "profile": report.profile.matrix,
        "per_player_costs": check.costs,
        "social_cost": check.social_cost,
        "kkt_tolerance": max(1e-9, 2.0 * check.max_residual),
    })
    print(f"{args.solver}: {report.stop_reason} after {report.iterations} iterations, "
          f"social cost {_fmt(check.social_cost)} -> {out}")
    return EXIT_OK if report.stop_reason == solvers.STOP_CONVERGED else EXIT_SOLVER


def cmd_verify(args) -> int:
    scenario = _load_scenario_arg(args.scenario)
    instance = scenario.build_instance()
    raw = json.loads(Path(args.profile).read_text())
    stored_tol = None
    if isinstance(raw, dict):
        stored_tol = raw.get("kkt_tolerance")
        raw = raw["profile"]
    profile = FlowProfile(raw)
    tolerance = args.tol if args.tol is not None else stored_tol
    report = analysis.kkt_verify(instance, profile, tolerance)
    payload = {
        "scenario": scenario.name,
        "is_ne": report.is_ne,
        "tolerance": report.tolerance,
        "stationarity_residual": report.stationarity_residual,
        "complementarity_residual": report.complementarity_residual,
        "feasibility_residual": report.feasibility_residual,
        "lambdas": report.lambdas,
        "multipliers": report.multipliers,
        "per_player_costs": report.costs,
        "social_cost": report.social_cost,
    }
    text = json.dumps(payload, indent=2, default=_json_default)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_social_opt(args) -> int:
    scenario = _load_scenario_arg(args.scenario)
    instance = scenario.build_instance()
    config = _merged_config(scenario, args)
    report = solvers.social_optimum(instance, config, starts=args.starts)
    out = Path(args.out) if args.out else Path(f"{scenario.name}_social_opt.json")
    _write_json(out, {
        "scenario": scenario.name,
        "seed": config.seed,
        "config_hash": config_hash(scenario.name, config, config.seed),
        "profile": report.profile.matrix,
        "per_player_costs": player_costs(instance, report.profile),
        "social_cost": social_cost(instance, report.profile),
        "local_minima": report.local_minima,
        "minima_disagree": report.minima_disagree,
        "stop_reason": report.stop_reason,
    })
    print(f"social optimum cost {_fmt(social_cost(instance, report.profile))} -> {out}")
    return EXIT_OK if report.stop_reason != solvers.STOP_DIVERGED else EXIT_SOLVER


def cmd_poa(args) -> int:
    scenario = _load_scenario_arg(args.scenario)
    instance = scenario.build_instance()
    config = _merged_config(scenario, args)
    report = analysis.price_of_anarchy(instance, config, starts=args.starts)
    payload = {
        "scenario": scenario.name,
        "seed": config.seed,
        "config_hash": config_hash(scenario.name, config, config.seed),
        "optimum_cost": report.optimum_cost,
        "worst_ne_cost": report.worst_ne_cost,
        "poa": report.poa,
        "provenance": report.provenance,
    }
    if args.out:
        _write_json(Path(args.out), payload)
    print(json.dumps(payload, indent=2, default=_json_default))
    return EXIT_OK


def _sweep_spec(scenario: Scenario, args) -> SweepSpec:
    if args.param is not None:
        if args.lo is None or args.hi is None or args.steps is None:
            raise ScenarioError("--param", "requires --from, --to and --steps")
        spec = SweepSpec(args.param, args.lo, args.hi, args.steps, args.log)
        if spec.lo > spec.hi or spec.steps < 2:
            raise ScenarioError("--param", "needs from <= to and steps >= 2")
        return spec
    if not scenario.sweeps:
        raise ScenarioError("sweeps", "scenario declares no sweeps and no --param was given")
    return scenario.sweeps[0]


def _sweep_alpha_scale(scenario, spec, config, writer):
    for value in spec.grid():
        instance = scenario.build_instance(alpha_scale=float(value))
        try:
            report = analysis.price_of_anarchy(instance, config)
            writer([value, report.poa, report.worst_ne_cost, report.optimum_cost,
                    report.provenance, "ok"])
            yield True
        except (analysis.AnalysisError, solvers.BestResponseError) as exc:
            writer([value, "", "", "", "", f"error:{exc.__class__.__name__}"])
            yield False


def _sweep_deadline_shift(scenario, spec, config, writer):
    for value in spec.grid():
        instance = scenario.build_instance(deadline_shift=float(value))
        cells_per_profile = instance.n_players * (instance.n_routes + 1)
        report = solvers.sird(instance, FlowProfile.uniform(instance), config)
        if report.stop_reason != solvers.STOP_CONVERGED:
            writer([value] + [""] * cells_per_profile + ["", "solver_failure"])
            yield False
            continue
        probe = analysis.uniqueness_probe(instance, config)
        cells = [value] + list(report.profile.matrix.ravel())
        writer(cells + [probe.essentially_unique, "ok"])
        yield True


def _sweep_family(scenario, spec, config, writer):
    instance = scenario.build_instance()
    points = analysis.ne_family_sweep(
        instance, free_player=0, free_route=1, grid=spec.steps,
        config=config, lo=spec.lo, hi=spec.hi,
    )
    for pt in points:
        if pt.status != "ok":
            writer([pt.value, False, "", pt.status])
            yield False
        else:
            writer([pt.value, pt.is_ne, pt.social_cost, "ok"])
            yield True


def cmd_sweep(args) -> int:
    scenario = _load_scenario_arg(args.scenario)
    config = _merged_config(scenario, args)
    spec = _sweep_spec(scenario, args)
    digest = config_hash(scenario.name, config, config.seed)

    instance = scenario.build_instance()
    n, cols = instance.n_players, instance.n_routes + 1
    if spec.parameter == "alpha_scale":
        header = ["c_alpha", "poa", "worst_ne_cost", "optimum_cost", "provenance"]
        run = _sweep_alpha_scale
    elif spec.parameter == "deadline_shift":
        header = ["delta"]
        header += [f"x{i + 1}_{c}" for i in range(n) for c in range(cols)]
        header += ["essentially_unique"]
        run = _sweep_deadline_shift
    else:
        header = ["x1_2", "is_ne", "social_cost"]
        run = _sweep_family

    out = Path(args.out) if args.out else Path(f"{scenario.name}_{spec.parameter}.csv")
    ok_count = 0
    with out.open("w") as fh:
        fh.write(",".join(["scenario", "seed", "config_hash"] + header + ["status"]) + "\n")

        def writer(cells):
            row = [scenario.name, str(config.seed), digest] + [_fmt(c) for c in cells]
            fh.write(",".join(row) + "\n")
            fh.flush()

        for ok in run(scenario, spec, config, writer):
            ok_count += ok
    print(f"sweep {spec.parameter}: {ok_count}/{spec.steps} points ok -> {out}")
    return EXIT_OK if ok_count > 0 else EXIT_SOLVER


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="green-route",
        description="Equilibrium solver and experiments for mixed-fleet routing games",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, starts_default=None):
        p.add_argument("scenario", help="scenario file path or bundled scenario name")
        p.add_argument("--gamma", type=float, default=None, help="fixed step size")
        p.add_argument("--eps", type=float, default=None, help="stopping threshold")
        p.add_argument("--max-iter", type=int, default=None, dest="max_iter")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output file path")
        if starts_default is not None:
            p.add_argument("--starts", type=int, default=starts_default)

    p = sub.add_parser("solve", help="run a solver from the uniform start")
    common(p)
    p.add_argument("--solver", choices=("sird", "itproxpt"), default="sird")
    p.add_argument("--trace", default=None, help="write per-iteration CSV trace here")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="check a stored profile for equilibrium")
    common(p)
    p.add_argument("--profile", required=True, help="profile JSON written by solve")
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("social-opt", help="multi-start search for the social optimum")
    common(p, starts_default=5)
    p.set_defaults(func=cmd_social_opt)

    p = sub.add_parser("poa", help="price of anarchy of the scenario")
    common(p, starts_default=8)
    p.set_defaults(func=cmd_poa)

    p = sub.add_parser("sweep", help="parameter sweep with CSV output")
    common(p)
    p.add_argument("--param", choices=("alpha_scale", "deadline_shift", "family_coordinate"),
                   default=None)
    p.add_argument("--from", dest="lo", type=float, default=None)
    p.add_argument("--to", dest="hi", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--log", action="store_true")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (analysis.AnalysisError, solvers.BestResponseError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except FileNotFoundError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
