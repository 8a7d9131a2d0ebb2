"""Experiment grids: train, solve, evaluate, aggregate, emit plot series.

A plan fixes an instance source, a method set, a grid of training sizes, and
a trial count. One shared test set and one shared reference sample are drawn
per plan; every (method, N, trial) cell trains on the same per-(N, trial)
dataset, so methods are compared on identical data. Results land in two CSV
files (per-trial rows and per-cell aggregates) whose content is bitwise
reproducible for a fixed seed, runtime columns aside.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import conic
from .benchmarks import (
    DistributionSpec,
    gen_example3,
    gen_inventory,
    gen_scheduling,
    radius_schedule,
    sample,
)
from .conic import SolverParams
from .evaluate import estimate_v_star, out_of_sample
from .model import (
    Norm,
    SampleRobustError,
    SampleSet,
    SupportPolyhedron,
    TwoStageProblem,
    load_problem,
)
from .reformulate import build_mp, build_saa, build_sp, extract_solution

__all__ = [
    "ExperimentPlan",
    "plan_from_dict",
    "load_plan",
    "run_experiment",
    "emit_plot_data",
    "TRIAL_COLUMNS",
    "METRICS",
]

_METHODS = ("SAA", "SP", "MP")
_TAG_TEST, _TAG_VSTAR, _TAG_TRAIN = 1, 2, 3

TRIAL_COLUMNS = (
    "method",
    "N",
    "trial",
    "radius",
    "norm",
    "status",
    "objective",
    "pct_infeasible",
    "optimality_gap",
    "prediction_error",
    "mean_cost",
    "solve_time_seconds",
)

METRICS = ("pct_infeasible", "optimality_gap", "prediction_error", "mean_cost")
_AGG_METRICS = METRICS + ("objective", "solve_time_seconds")
_STATS = ("mean", "min", "max", "p50")


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything needed to reproduce one experiment grid."""

    instance: dict                       # {"generator": ...} or {"file": ..., "distribution": ...}
    methods: tuple[str, ...]
    N_grid: tuple[int, ...]
    M: int
    test_size: int = 2000
    vstar_size: int = 20000
    norm: Norm = Norm.LINF
    schedules: dict = field(default_factory=dict)    # per-method or "*" fallback
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(m.upper() for m in self.methods))
        object.__setattr__(self, "N_grid", tuple(int(v) for v in self.N_grid))
        object.__setattr__(self, "norm", Norm(self.norm))
        bad = [m for m in self.methods if m not in _METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {_METHODS}")
        if not self.methods:
            raise ValueError("plan needs at least one method")
        if any(b <= a for a, b in zip(self.N_grid, self.N_grid[1:])) or not self.N_grid:
            raise ValueError("N_grid must be nonempty and strictly increasing")
        if self.M < 1 or self.test_size < 1 or self.vstar_size < 1:
            raise ValueError("M, test_size and vstar_size must all be >= 1")

    def radius_for(self, method: str, N: int) -> float:
        if method == "SAA":
            return 0.0
        sched = self.schedules.get(method, self.schedules.get("*", {}))
        if "radius" in sched:
            return float(sched["radius"])
        if "kappa" in sched:
            return radius_schedule(
                "power", N, kappa=float(sched["kappa"]),
                exponent=float(sched["exponent"]) if "exponent" in sched else None,
                k=sched.get("k"), d=sched.get("d"),
            )
        return 0.0


def plan_from_dict(data: dict) -> ExperimentPlan:
    schedules = data.get("schedules", {})
    if "schedule" in data:
        schedules = dict(schedules)
        schedules.setdefault("*", data["schedule"])
    return ExperimentPlan(
        instance=data["instance"],
        methods=tuple(data.get("methods", ("SAA", "MP"))),
        N_grid=tuple(data["N_grid"]),
        M=int(data["M"]),
        test_size=int(data.get("test_size", 2000)),
        vstar_size=int(data.get("vstar_size", 20000)),
        norm=Norm(data.get("norm", "linf")),
        schedules=schedules,
        seed=int(data.get("seed", 0)),
    )


def load_plan(path: str | Path) -> ExperimentPlan:
    with open(path) as fh:
        return plan_from_dict(json.load(fh))


def _derive_seed(base: int, *parts: int) -> int:
    ss = np.random.SeedSequence(entropy=int(base), spawn_key=tuple(int(p) for p in parts))
    return int(ss.generate_state(1, np.uint64)[0])


def materialize_instance(plan: ExperimentPlan) -> tuple[TwoStageProblem, DistributionSpec]:
    src = plan.instance
    if "generator" in src:
        kind = src.get("kind", "uniform")
        name = src["generator"]
        seed = int(src.get("seed", plan.seed))
        if name == "inventory":
            return gen_inventory(int(src["n"]), float(src.get("K", 20.0)), seed, kind)
        if name == "scheduling":
            return gen_scheduling(int(src["n"]), float(src.get("c", 2.0)), seed, kind)
        if name == "example3":
            problem = gen_example3()
            spec = DistributionSpec(
                kind="uniform", mean=0.5, std=1.0 / np.sqrt(12.0), dim=1,
                truncation=SupportPolyhedron.box(np.zeros(1), np.ones(1)), seed=seed,
            )
            return problem, spec
        raise SampleRobustError(f"unknown generator {name!r}")
    if "file" in src:
        problem = load_problem(src["file"])
        dist = DistributionSpec.from_dict(src["distribution"])
        return problem, dist
    raise SampleRobustError("plan instance needs a 'generator' or 'file' entry")


_BUILDERS = {"SAA": None, "SP": build_sp, "MP": build_mp}


def _run_cell(problem, dspec, plan, method, N, trial, test, v_star, params):
    from .model import RobustConfig

    train = sample(dataclasses.replace(dspec, seed=_derive_seed(plan.seed, _TAG_TRAIN, N, trial)), N)
    radius = plan.radius_for(method, N)
    if method == "SAA":
        artifacts = build_saa(problem, train)
    else:
        artifacts = _BUILDERS[method](problem, train, RobustConfig(plan.norm, radius))
    result = conic.solve(artifacts.program, params)
    row = {
        "method": method,
        "N": N,
        "trial": trial,
        "radius": radius,
        "norm": plan.norm.value,
        "status": result.status,
        "objective": None,
        "pct_infeasible": None,
        "optimality_gap": None,
        "prediction_error": None,
        "mean_cost": None,
        "solve_time_seconds": result.solve_time,
    }
    if result.is_optimal:
        solution = extract_solution(artifacts, result)
        report = out_of_sample(problem, solution, test, v_star)
        row.update(
            objective=solution.objective,
            pct_infeasible=report.pct_infeasible,
            optimality_gap=report.optimality_gap,
            prediction_error=report.prediction_error,
            mean_cost=report.mean_cost,
        )
    return row


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_experiment(
    plan: ExperimentPlan,
    out_dir: str | Path,
    jobs: int = 1,
    params: Optional[SolverParams] = None,
) -> dict:
    """Execute the full grid and write trials.csv, aggregate.csv and meta.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem, dspec = materialize_instance(plan)

    test = sample(dataclasses.replace(dspec, seed=_derive_seed(plan.seed, _TAG_TEST)), plan.test_size)
    vstar_sample = sample(
        dataclasses.replace(dspec, seed=_derive_seed(plan.seed, _TAG_VSTAR)), plan.vstar_size
    )
    t0 = time.perf_counter()
    v_star = estimate_v_star(problem, vstar_sample, params)
    vstar_time = time.perf_counter() - t0

    cells = [
        (method, N, trial)
        for method in plan.methods
        for N in plan.N_grid
        for trial in range(plan.M)
    ]
    rows: dict[tuple, dict] = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {
                key: pool.submit(_run_cell, problem, dspec, plan, *key, test, v_star, params)
                for key in cells
            }
            for key, fut in futures.items():
                rows[key] = fut.result()
    else:
        for key in cells:
            rows[key] = _run_cell(problem, dspec, plan, *key, test, v_star, params)

    trials_path = out / "trials.csv"
    with open(trials_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRIAL_COLUMNS)
        for key in cells:                       # ordered collector: fixed cell order
            writer.writerow([_fmt(rows[key][col]) for col in TRIAL_COLUMNS])

    agg_path = out / "aggregate.csv"
    _write_aggregate(plan, rows, cells, agg_path)

    meta = {
        "plan": {
            "instance": plan.instance,
            "methods": list(plan.methods),
            "N_grid": list(plan.N_grid),
            "M": plan.M,
            "test_size": plan.test_size,
            "vstar_size": plan.vstar_size,
            "norm": plan.norm.value,
            "schedules": plan.schedules,
            "seed": plan.seed,
        },
        "v_star": v_star,
        "v_star_solve_seconds": vstar_time,
        "distribution": dspec.to_dict(),
    }
    meta_path = out / "meta.json"
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=1)
        fh.write("\n")
    return {"trials": trials_path, "aggregate": agg_path, "meta": meta_path, "v_star": v_star}


def _write_aggregate(plan, rows, cells, path: Path) -> None:
    header = ["method", "N", "radius", "n_trials", "n_solved", "n_gap_defined"]
    for metric in _AGG_METRICS:
        header += [f"{metric}_{stat}" for stat in _STATS]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for method in plan.methods:
            for N in plan.N_grid:
                group = [rows[(method, N, t)] for t in range(plan.M)]
                solved = [g for g in group if g["status"] == "Optimal"]
                gaps = [g for g in group if g["optimality_gap"] is not None]
                rec = [
                    method,
                    str(N),
                    _fmt(plan.radius_for(method, N)),
                    str(len(group)),
                    str(len(solved)),
                    str(len(gaps)),
                ]
                for metric in _AGG_METRICS:
                    vals = np.array([g[metric] for g in group if g[metric] is not None], float)
                    if vals.size:
                        rec += [
                            repr(float(vals.mean())),
                            repr(float(vals.min())),
                            repr(float(vals.max())),
                            repr(float(np.median(vals))),
                        ]
                    else:
                        rec += ["", "", "", ""]
                writer.writerow(rec)


def emit_plot_data(aggregate_csv: str | Path, out_dir: str | Path) -> list[Path]:
    """Split an aggregate file into one (N, method, mean, min, max, p50) series per metric."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(aggregate_csv, newline="") as fh:
        reader = csv.DictReader(fh)
        records = list(reader)
        if reader.fieldnames is None:
            raise SampleRobustError(f"{aggregate_csv}: empty aggregate file")
        fields = set(reader.fieldnames)
    paths = []
    for metric in METRICS:
        needed = [f"{metric}_{stat}" for stat in _STATS]
        missing = [c for c in ["method", "N", *needed] if c not in fields]
        if missing:
            raise SampleRobustError(f"{aggregate_csv}: missing columns {missing}")
        path = out / f"series_{metric}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["N", "method", "mean", "min", "max", "p50"])
            for rec in records:
                writer.writerow([rec["N"], rec["method"]] + [rec[c] for c in needed])
        paths.append(path)
    return paths
