"""Data-driven two-stage linear optimization with per-sample robustness balls.

The workflow: describe a two-stage problem (model), pick a ball shape and
radius, build a finite counterpart (reformulate), solve it (conic), and score
the resulting first-stage decision out of sample (evaluate). Benchmark
families, experiment grids and a CLI sit on top.
"""

from .model import (
    INFEASIBLE,
    DimensionMismatchError,
    Infeasible,
    InstanceFormatError,
    Norm,
    Policy,
    PolicySolution,
    RobustConfig,
    SampleRobustError,
    SampleSet,
    SupportPolyhedron,
    SupportViolationError,
    TwoStageProblem,
    UnboundedSecondStageError,
    dual_norm,
    load_problem,
    load_samples,
    save_problem,
    save_samples,
)
from .conic import ConicProgram, SolverParams, SolveResult, solve, to_lp_text
from .reformulate import (
    ReformulationArtifacts,
    build_mp,
    build_mp_fixed_x,
    build_saa,
    build_sp,
    extract_solution,
)
from .evaluate import (
    EvalReport,
    SecondStageOracle,
    apply_mp_policy,
    certified_objective,
    estimate_v_star,
    max_constraint_violation,
    out_of_sample,
    second_stage_cost,
)
from .feasibility import A4Check, check_a4_sufficient, verify_witness
from .benchmarks import (
    DistributionSpec,
    closed_form_example3,
    gen_example2,
    gen_example3,
    gen_inventory,
    gen_scheduling,
    radius_schedule,
    sample,
    scheduling_recursion_cost,
)
from .experiment import ExperimentPlan, emit_plot_data, load_plan, run_experiment

__version__ = "0.1.0"
