"""Finite counterparts of the data-driven two-stage problem.

Three builders produce ConicPrograms over the shared first stage x:

* ``build_saa``      -- scenario program: one static recourse vector per sample.
* ``build_mp``       -- one affine recourse rule per sample, each required to be
                        feasible on the ball around its own sample; the worst
                        case over each ball is dualized into finitely many rows.
* ``build_sp``       -- a single affine recourse rule shared by every ball.

The dualization introduces, per rule i and per constraint row j (plus j = 0
for the objective's worst case), a scalar multiplier theta >= 0 for the ball
radius and a vector multiplier rho >= 0 for the support rows, tied together
by a dual-norm epigraph. Rows whose W and H coefficients are all zero are
deterministic first-stage constraints; they are emitted once instead of once
per rule, which changes nothing about the optimum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .conic import EQ, GE, ConicProgram, SolveResult, add_dual_norm_epigraph
from .model import (
    Norm,
    Policy,
    PolicySolution,
    RobustConfig,
    SampleRobustError,
    SampleSet,
    SupportViolationError,
    TwoStageProblem,
    dual_norm,
    tolerance,
)

__all__ = [
    "ReformulationArtifacts",
    "ExtractionError",
    "build_saa",
    "build_mp",
    "build_sp",
    "build_mp_fixed_x",
    "extract_solution",
]


class ExtractionError(SampleRobustError):
    """Solution extraction was attempted on a non-optimal solve result."""


@dataclass(frozen=True, eq=False)
class ReformulationArtifacts:
    """A built program plus everything needed to interpret its solution."""

    program: ConicProgram
    ghat: np.ndarray              # (N, num support rows): G xi^i - g0 per sample
    method: str                   # "SAA" | "SP" | "MP"
    radius: float
    norm: Norm
    problem: TwoStageProblem
    samples: SampleSet
    num_policies: int


def _ghat(problem: TwoStageProblem, samples: SampleSet) -> np.ndarray:
    sup = problem.support
    if sup.is_free:
        return np.zeros((len(samples), 0))
    gh = samples.points @ sup.G.T - sup.g0
    if gh.min(initial=0.0) < -tolerance("SUPPORT_TOL"):
        i, t = np.unravel_index(np.argmin(gh), gh.shape)
        raise SupportViolationError(
            f"sample {i} violates support row {t} by {-gh[i, t]:.3e}; "
            "samples must lie inside the declared support"
        )
    return gh


def _split_rows(problem: TwoStageProblem) -> tuple[np.ndarray, np.ndarray]:
    """Indices of deterministic rows (zero W and H) and of all other rows."""
    active = (np.abs(problem.W).sum(axis=1) > 0) | (np.abs(problem.H).sum(axis=1) > 0)
    return np.flatnonzero(~active), np.flatnonzero(active)


def _check_dims(problem: TwoStageProblem, samples: SampleSet) -> None:
    if samples.dim != problem.d:
        raise SupportViolationError(
            f"samples have dimension {samples.dim}, problem expects {problem.d}"
        )


# ---------------------------------------------------------------------------
# scenario program

def build_saa(problem: TwoStageProblem, samples: SampleSet) -> ReformulationArtifacts:
    """Average-over-scenarios program with one static recourse per sample."""
    _check_dims(problem, samples)
    ghat = _ghat(problem, samples)
    N = len(samples)
    n, r = problem.n, problem.r
    det, act = _split_rows(problem)
    prog = ConicProgram()
    prog.add_vars(n, labels=[("x", j) for j in range(n)])
    y_start = prog.num_vars
    prog.add_vars(N * r, labels=[("y0", i, k) for i in range(N) for k in range(r)])

    prog.add_objective_terms(np.arange(n), problem.c)
    prog.add_objective_terms(np.arange(y_start, y_start + N * r), np.tile(problem.q / N, N))

    if det.size:
        Td = problem.T[det]
        ri, ci = np.nonzero(Td)
        prog.add_rows(ri, ci, Td[ri, ci], GE, problem.h0[det])

    Ta = problem.T[act]
    Wa = problem.W[act]
    Ha = problem.H[act]
    h0a = problem.h0[act]
    t_ri, t_ci = np.nonzero(Ta)
    t_v = Ta[t_ri, t_ci]
    w_ri, w_ci = np.nonzero(Wa)
    w_v = Wa[w_ri, w_ci]
    rows = np.concatenate([t_ri, w_ri])
    for i in range(N):
        cols = np.concatenate([t_ci, y_start + i * r + w_ci])
        vals = np.concatenate([t_v, w_v])
        prog.add_rows(rows, cols, vals, GE, h0a + Ha @ samples.points[i])

    return ReformulationArtifacts(prog, ghat, "SAA", 0.0, Norm.LINF, problem, samples, N)


# ---------------------------------------------------------------------------
# robust counterparts

def _epigraph_template(problem: TwoStageProblem, act: np.ndarray, dual: Norm, P: int, J: int):
    """Per-rule dual-norm rows over block-local columns.

    Local layout: [y0 (r) | Y (r*d) | theta (J) | rho (J*mt) | u (J*d if L1)].
    Returns linear COO pieces for LINF/L1 duals, or per-position SOC component
    lists for the L2 dual. Values are sample-independent, so one template is
    replicated across every rule.
    """
    r, d, mt = problem.r, problem.d, problem.support.num_rows
    G = problem.support.G
    theta0 = P
    rho0 = P + J
    u0 = P + J + J * mt

    lin_rows: list[np.ndarray] = []
    lin_cols: list[np.ndarray] = []
    lin_vals: list[np.ndarray] = []
    lin_rhs: list[float] = []
    socs: list[tuple[int, list]] = []
    row_count = 0

    def expr_components(jpos: int, j: Optional[int]):
        """Affine components (cols, coefs, const) of the jpos-th dual-norm argument."""
        comps = []
        for l in range(d):
            cols = []
            coefs = []
            if j is None:
                nz = np.flatnonzero(problem.q)
                cols.append(r + nz * d + l)
                coefs.append(problem.q[nz])
                const = 0.0
            else:
                nz = np.flatnonzero(problem.W[j])
                cols.append(r + nz * d + l)
                coefs.append(-problem.W[j, nz])
                const = float(problem.H[j, l])
            if mt:
                nzg = np.flatnonzero(G[:, l])
                cols.append(rho0 + jpos * mt + nzg)
                coefs.append(G[nzg, l])
            comps.append((np.concatenate(cols) if cols else np.zeros(0, np.int64),
                          np.concatenate(coefs) if coefs else np.zeros(0),
                          const))
        return comps

    def emit(jpos: int, comps) -> None:
        nonlocal row_count
        t_col = theta0 + jpos
        if dual == Norm.L2:
            socs.append((t_col, comps))
            return
        if dual == Norm.LINF:
            for cols, coefs, const in comps:
                for sgn in (1.0, -1.0):
                    lin_rows.append(np.full(cols.size + 1, row_count))
                    lin_cols.append(np.append(cols, t_col))
                    lin_vals.append(np.append(-sgn * coefs, 1.0))
                    lin_rhs.append(sgn * const)
                    row_count += 1
            return
        # dual == L1: absolute-value variables u plus a summing row
        u_cols = u0 + jpos * d + np.arange(d)
        for l, (cols, coefs, const) in enumerate(comps):
            for sgn in (1.0, -1.0):
                lin_rows.append(np.full(cols.size + 1, row_count))
                lin_cols.append(np.append(cols, u_cols[l]))
                lin_vals.append(np.append(-sgn * coefs, 1.0))
                lin_rhs.append(sgn * const)
                row_count += 1
        lin_rows.append(np.full(d + 1, row_count))
        lin_cols.append(np.append(u_cols, t_col))
        lin_vals.append(np.append(-np.ones(d), 1.0))
        lin_rhs.append(0.0)
        row_count += 1

    emit(0, expr_components(0, None))
    for pos, j in enumerate(act, start=1):
        emit(pos, expr_components(pos, int(j)))

    if dual == Norm.L2:
        return None, socs, 0
    return (
        np.concatenate(lin_rows) if lin_rows else np.zeros(0, np.int64),
        np.concatenate(lin_cols) if lin_cols else np.zeros(0, np.int64),
        np.concatenate(lin_vals) if lin_vals else np.zeros(0),
        np.asarray(lin_rhs),
    ), None, row_count


def _build_robust(
    problem: TwoStageProblem,
    samples: SampleSet,
    config: RobustConfig,
    shared: bool,
    fixed_x: Optional[np.ndarray] = None,
) -> ReformulationArtifacts:
    _check_dims(problem, samples)
    ghat = _ghat(problem, samples)
    N = len(samples)
    n, r, d, mt = problem.n, problem.r, problem.d, problem.support.num_rows
    eps = config.radius
    dual = dual_norm(config.norm)
    det, act = _split_rows(problem)
    R = act.size
    J = 1 + R
    P = r + r * d                       # policy part of the local layout
    tail = J + J * mt + (J * d if dual == Norm.L1 else 0)

    prog = ConicProgram()
    prog.add_vars(n, labels=[("x", j) for j in range(n)])
    if shared:
        shared_start = prog.num_vars
        prog.add_vars(r, labels=[("y0", 0, k) for k in range(r)])
        prog.add_vars(r * d, labels=[("Y", 0, k, l) for k in range(r) for l in range(d)])

    def tail_labels(i: int) -> list:
        labs: list = [("theta", i, 0)]
        labs += [("theta", i, int(j) + 1) for j in act]
        if mt:
            labs += [("rho", i, jpos, t) for jpos in range(J) for t in range(mt)]
        if dual == Norm.L1:
            labs += [("u", i, jpos, l) for jpos in range(J) for l in range(d)]
        return labs

    tail_lb = np.zeros(tail)            # theta, rho, u are all nonnegative
    blocks = np.empty(N, dtype=np.int64)
    for i in range(N):
        if shared:
            blocks[i] = prog.num_vars
            prog.add_vars(tail, labels=tail_labels(i), lb=tail_lb)
        else:
            start = prog.num_vars
            prog.add_vars(r, labels=[("y0", i, k) for k in range(r)])
            prog.add_vars(r * d, labels=[("Y", i, k, l) for k in range(r) for l in range(d)])
            prog.add_vars(tail, labels=tail_labels(i), lb=tail_lb)
            blocks[i] = start

    def map_local(local: np.ndarray, i: int) -> np.ndarray:
        """Block-local column ids -> global ids (policy part may be shared)."""
        if not shared:
            return blocks[i] + local
        return np.where(local < P, shared_start + local, blocks[i] + (local - P))

    # objective: c'x + (1/N) sum_i [ eps*theta_i0 + ghat_i . rho_i0 + q'(y0_i + Y_i xi_i) ]
    prog.add_objective_terms(np.arange(n), problem.c)
    q_nz = np.flatnonzero(problem.q)
    obj_local = [np.array([P], dtype=np.int64)]
    if mt:
        obj_local.append(P + J + np.arange(mt))
    obj_local.append(q_nz)
    obj_local.append((q_nz[:, None] * d + r + np.arange(d)).ravel())
    obj_local = np.concatenate(obj_local)
    for i in range(N):
        vals = [np.array([eps / N])]
        if mt:
            vals.append(ghat[i] / N)
        vals.append(problem.q[q_nz] / N)
        vals.append(np.repeat(problem.q[q_nz] / N, d) * np.tile(samples.points[i], q_nz.size))
        prog.add_objective_terms(map_local(obj_local, i), np.concatenate(vals))

    # deterministic first-stage rows, once
    if det.size:
        Td = problem.T[det]
        ri, ci = np.nonzero(Td)
        prog.add_rows(ri, ci, Td[ri, ci], GE, problem.h0[det])

    # robust rows: e_j'[T x + W (y0_i + Y_i xi_i) - h(xi_i)] >= eps*theta_ij + ghat_i . rho_ij
    Ta, Wa, Ha, h0a = problem.T[act], problem.W[act], problem.H[act], problem.h0[act]
    t_ri, t_ci = np.nonzero(Ta)
    t_v = Ta[t_ri, t_ci]
    w_ri, w_ci = np.nonzero(Wa)
    w_v = Wa[w_ri, w_ci]
    y_rows = np.repeat(w_ri, d)
    y_local = (r + w_ci[:, None] * d + np.arange(d)).ravel()
    y_base = np.repeat(w_v, d)
    th_local = P + 1 + np.arange(R)
    rho_rows = np.repeat(np.arange(R), mt)
    rho_local = (P + J + (1 + np.arange(R))[:, None] * mt + np.arange(mt)).ravel()
    rob_rows = np.concatenate([t_ri, w_ri, y_rows, np.arange(R), rho_rows])
    rob_local = np.concatenate([w_ci, y_local, th_local, rho_local])  # all but the x part
    for i in range(N):
        xi = samples.points[i]
        vals = np.concatenate([
            t_v,
            w_v,
            y_base * np.tile(xi, w_v.size),
            np.full(R, -eps),
            -np.tile(ghat[i], R),
        ])
        cols = np.concatenate([t_ci, map_local(rob_local, i)])
        prog.add_rows(rob_rows, cols, vals, GE, h0a + Ha @ xi)

    # dual-norm epigraphs, one template replicated per rule
    lin, socs, rows_per = _epigraph_template(problem, act, dual, P, J)
    if lin is not None:
        e_rows, e_cols, e_vals, e_rhs = lin
        for i in range(N):
            prog.add_rows(e_rows, map_local(e_cols, i), e_vals, GE, e_rhs)
    else:
        for i in range(N):
            for t_local, comps in socs:
                t_glob = int(map_local(np.array([t_local]), i)[0])
                prog.add_soc(
                    t_glob,
                    [(map_local(cols, i), coefs, const) for cols, coefs, const in comps],
                )

    if fixed_x is not None:
        fixed_x = np.asarray(fixed_x, float).reshape(-1)
        if fixed_x.size != n:
            raise SampleRobustError(f"fixed x has length {fixed_x.size}, expected {n}")
        for j in range(n):
            prog.add_linear((np.array([j]), np.array([1.0])), EQ, fixed_x[j])

    method = "SP" if shared else "MP"
    return ReformulationArtifacts(
        prog, ghat, method, eps, config.norm, problem, samples, 1 if shared else N
    )


def build_mp(problem: TwoStageProblem, samples: SampleSet, config: RobustConfig) -> ReformulationArtifacts:
    """Robust counterpart with one affine recourse rule per sample ball."""
    return _build_robust(problem, samples, config, shared=False)


def build_sp(problem: TwoStageProblem, samples: SampleSet, config: RobustConfig) -> ReformulationArtifacts:
    """Robust counterpart with a single affine recourse rule for all balls."""
    return _build_robust(problem, samples, config, shared=True)


def build_mp_fixed_x(
    problem: TwoStageProblem,
    samples: SampleSet,
    config: RobustConfig,
    x: np.ndarray,
) -> ReformulationArtifacts:
    """Multi-rule counterpart with the first stage pinned by equality rows."""
    return _build_robust(problem, samples, config, shared=False, fixed_x=x)


# ---------------------------------------------------------------------------
# solution extraction

def extract_solution(artifacts: ReformulationArtifacts, result: SolveResult) -> PolicySolution:
    """Recover x and the affine rules from a solved program via variable labels."""
    if not result.is_optimal:
        raise ExtractionError(
            f"cannot extract a solution from a {result.status} result"
        )
    problem = artifacts.problem
    n, r, d = problem.n, problem.r, problem.d
    P = artifacts.num_policies
    x = np.zeros(n)
    y0s = np.zeros((P, r))
    Ys = np.zeros((P, r, d))
    primal = result.primal
    for idx, lab in enumerate(artifacts.program.var_labels):
        if lab is None:
            continue
        tag = lab[0]
        if tag == "x":
            x[lab[1]] = primal[idx]
        elif tag == "y0":
            y0s[lab[1], lab[2]] = primal[idx]
        elif tag == "Y":
            Ys[lab[1], lab[2], lab[3]] = primal[idx]
    policies = tuple(Policy(y0s[p], Ys[p]) for p in range(P))
    return PolicySolution(
        x=x,
        policies=policies,
        objective=float(result.objective),
        method=artifacts.method,
        radius=artifacts.radius,
        norm=artifacts.norm,
        centers=artifacts.samples.points,
    )
