"""Command-line front end: generate, solve, evaluate, verify-a4, experiment, plot-data."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import conic
from .benchmarks import (
    DistributionSpec,
    gen_example2,
    gen_example3,
    gen_inventory,
    gen_scheduling,
    radius_schedule,
    sample,
)
from .evaluate import estimate_v_star, out_of_sample, EVAL_CSV_COLUMNS
from .experiment import emit_plot_data, load_plan, run_experiment
from .feasibility import check_a4_sufficient
from .model import (
    Norm,
    PolicySolution,
    RobustConfig,
    SampleRobustError,
    SupportPolyhedron,
    load_problem,
    load_samples,
    save_problem,
    save_samples,
)
from .reformulate import build_mp, build_saa, build_sp, extract_solution

__all__ = ["main"]


def _parse_schedule(text: str) -> dict:
    out = {}
    for part in text.split(","):
        if not part.strip():
            continue
        key, _, val = part.partition("=")
        key = key.strip()
        if key == "exp":
            key = "exponent"
        out[key] = float(val)
    if "kappa" not in out:
        raise argparse.ArgumentTypeError("schedule needs at least kappa=<value>")
    return out


def _radius_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--norm", choices=[n.value for n in Norm], default="linf")
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--radius", type=float, default=None, help="fixed ball radius")
    group.add_argument(
        "--schedule", type=_parse_schedule, default=None,
        help="power-law radius, e.g. kappa=10,exp=0.1 (exp may be given via k=..,d=..)",
    )


def _resolve_radius(args, N: int) -> float:
    if args.radius is not None:
        return args.radius
    if args.schedule is not None:
        sched = dict(args.schedule)
        kappa = sched.pop("kappa")
        return radius_schedule(
            "power", N, kappa=kappa,
            exponent=sched.get("exponent"),
            k=sched.get("k"), d=int(sched["d"]) if "d" in sched else None,
        )
    return 0.0


def _cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = None
    if args.family == "inventory":
        problem, spec = gen_inventory(args.n, args.K, args.seed, args.kind)
    elif args.family == "scheduling":
        problem, spec = gen_scheduling(args.n, args.c, args.seed, args.kind)
    elif args.family == "example3":
        problem = gen_example3()
        spec = DistributionSpec(
            kind="uniform", mean=0.5, std=1.0 / np.sqrt(12.0), dim=1,
            truncation=SupportPolyhedron.box(np.zeros(1), np.ones(1)), seed=args.seed,
        )
    elif args.family == "example2":
        problem = gen_example2()
    else:
        raise SampleRobustError(f"unknown family {args.family}")
    save_problem(problem, out / "instance.json")
    sidecar = {"family": args.family, "seed": args.seed, "params": {
        "n": args.n, "K": args.K, "c": args.c, "kind": args.kind, "samples": args.samples,
    }}
    if spec is not None:
        sidecar["distribution"] = spec.to_dict()
        if args.samples:
            samples = sample(spec, args.samples)
            save_samples(samples, out / "samples.csv")
    elif args.samples:
        # the no-single-rule example has no distribution; its box corners are
        # the canonical training set
        corners = np.array([[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]])
        from .model import SampleSet
        save_samples(SampleSet(corners), out / "samples.csv")
        sidecar["samples_note"] = "support box corners"
    with open(out / "generator.json", "w") as fh:
        json.dump(sidecar, fh, indent=1)
        fh.write("\n")
    print(f"wrote {out / 'instance.json'}")
    return 0


def _cmd_solve(args) -> int:
    problem = load_problem(args.instance)
    samples = load_samples(args.samples, support=problem.support)
    radius = _resolve_radius(args, len(samples))
    method = args.method.upper()
    if method == "SAA":
        artifacts = build_saa(problem, samples)
    else:
        config = RobustConfig(Norm(args.norm), radius)
        artifacts = (build_mp if method == "MP" else build_sp)(problem, samples, config)
    result = conic.solve(artifacts.program)
    if not result.is_optimal:
        print(json.dumps({"status": result.status, "method": method, "radius": radius}))
        return 2
    solution = extract_solution(artifacts, result)
    payload = solution.to_dict()
    payload["status"] = result.status
    payload["solve_time_seconds"] = result.solve_time
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload, fh)
            fh.write("\n")
    print(json.dumps({
        "status": result.status, "method": method,
        "objective": solution.objective, "radius": radius,
    }))
    return 0


def _cmd_evaluate(args) -> int:
    problem = load_problem(args.instance)
    with open(args.solution) as fh:
        solution = PolicySolution.from_dict(json.load(fh))
    test = load_samples(args.test, support=problem.support)
    if args.vstar is not None:
        v_star = args.vstar
    elif args.vstar_samples:
        big = load_samples(args.vstar_samples, support=problem.support)
        v_star = estimate_v_star(problem, big)
    else:
        raise SampleRobustError("evaluate needs --vstar or --vstar-samples")
    report = out_of_sample(problem, solution, test, v_star)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report.to_dict(), fh)
            fh.write("\n")
    if args.csv:
        import csv as _csv
        with open(args.csv, "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(EVAL_CSV_COLUMNS)
            writer.writerow(report.csv_row())
    print(json.dumps(report.to_dict()))
    return 0


def _cmd_verify_a4(args) -> int:
    problem = load_problem(args.instance)
    check = check_a4_sufficient(problem)
    print(json.dumps(check.to_dict()))
    return 0


def _cmd_experiment(args) -> int:
    plan = load_plan(args.plan)
    if args.seed is not None:
        plan = dataclasses.replace(plan, seed=args.seed)
    paths = run_experiment(plan, args.out, jobs=args.jobs)
    print(json.dumps({k: str(v) for k, v in paths.items()}))
    return 0


def _cmd_plot_data(args) -> int:
    paths = emit_plot_data(args.aggregate, args.out)
    print(json.dumps([str(p) for p in paths]))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="samplerobust",
        description="Data-driven two-stage linear programs with per-sample "
                    "robustness balls and affine recourse rules.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a benchmark instance, samples, and provenance")
    p.add_argument("--family", required=True,
                   choices=["inventory", "scheduling", "example2", "example3"])
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--K", type=float, default=20.0)
    p.add_argument("--c", type=float, default=2.0)
    p.add_argument("--kind", choices=["uniform", "normal", "lognormal"], default="uniform")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=0, help="also draw this many samples")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("solve", help="train one method on an instance and sample file")
    p.add_argument("instance")
    p.add_argument("samples")
    p.add_argument("--method", choices=["saa", "sp", "mp"], required=True)
    _radius_args(p)
    p.add_argument("--out", default=None, help="write the solution JSON here")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("evaluate", help="score a solution file on a test sample file")
    p.add_argument("instance")
    p.add_argument("solution")
    p.add_argument("test")
    p.add_argument("--vstar", type=float, default=None)
    p.add_argument("--vstar-samples", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("verify-a4", help="check for a support-wide feasible affine rule")
    p.add_argument("instance")
    p.set_defaults(func=_cmd_verify_a4)

    p = sub.add_parser("experiment", help="run a full plan and write result CSVs")
    p.add_argument("plan")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="override the plan seed")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("plot-data", help="split an aggregate CSV into per-metric series")
    p.add_argument("aggregate")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plot_data)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SampleRobustError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
