"""Sufficient feasibility check for robust recourse over the whole support.

The check asks for a first-stage decision and a single affine recourse rule
that satisfy every constraint row for every realization in the support
polyhedron. Each semi-infinite row is dualized over {z : G z >= g0}: row j
holds for all z iff some multiplier vector rho_j >= 0 satisfies
G'rho_j = (W_j Y - H_j)' and T_j x + W_j y0 + g0'rho_j >= h0_j. Feasibility
of the resulting LP certifies the condition; infeasibility is reported as
Unknown because the condition is sufficient, not necessary: instances exist
whose per-ball rules cover the support even though no single affine rule
does.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import conic
from .conic import EQ, GE, ConicProgram, SolverParams, SolveResult
from .model import SampleRobustError, TwoStageProblem
from .evaluate import max_affine_over_region

__all__ = ["A4Check", "check_a4_sufficient", "verify_witness"]


@dataclass(frozen=True)
class A4Check:
    holds: bool
    x: Optional[np.ndarray] = None
    y0: Optional[np.ndarray] = None
    Y: Optional[np.ndarray] = None

    @property
    def verdict(self) -> str:
        return "holds" if self.holds else "unknown"

    def to_dict(self) -> dict:
        out = {"verdict": self.verdict}
        if self.holds:
            out["witness"] = {
                "x": self.x.tolist(),
                "y0": self.y0.tolist(),
                "Y": self.Y.tolist(),
            }
        return out


def check_a4_sufficient(
    problem: TwoStageProblem, params: Optional[SolverParams] = None
) -> A4Check:
    """Search for one (x, y0, Y) feasible on the entire support polyhedron.

    Returns Holds with the witness found by the LP (any feasible point of a
    zero-objective program), or Unknown when the LP is infeasible.
    """
    n, r, m, d = problem.n, problem.r, problem.m, problem.d
    G, g0 = problem.support.G, problem.support.g0
    mt = problem.support.num_rows
    prog = ConicProgram()
    x = prog.add_vars(n, labels=[("x", j) for j in range(n)])
    y0 = prog.add_vars(r, labels=[("y0", 0, k) for k in range(r)])
    Y = prog.add_vars(r * d, labels=[("Y", 0, k, l) for k in range(r) for l in range(d)])
    rho = prog.add_vars(m * mt, lb=0.0) if mt else np.zeros(0, dtype=np.int64)

    for j in range(m):
        wnz = np.flatnonzero(problem.W[j])
        for l in range(d):
            idx = [Y[wnz * d + l]]
            coef = [-problem.W[j, wnz]]
            if mt:
                gnz = np.flatnonzero(G[:, l])
                idx.append(rho[j * mt + gnz])
                coef.append(G[gnz, l])
            prog.add_linear(
                (np.concatenate(idx), np.concatenate(coef)), EQ, -problem.H[j, l]
            )
        tnz = np.flatnonzero(problem.T[j])
        idx = [x[tnz], y0[wnz]]
        coef = [problem.T[j, tnz], problem.W[j, wnz]]
        if mt:
            gnz0 = np.flatnonzero(g0)
            idx.append(rho[j * mt + gnz0])
            coef.append(g0[gnz0])
        prog.add_linear((np.concatenate(idx), np.concatenate(coef)), GE, problem.h0[j])

    result = conic.solve(prog, params)
    if result.is_optimal:
        primal = result.primal
        return A4Check(
            holds=True,
            x=primal[:n].copy(),
            y0=primal[n:n + r].copy(),
            Y=primal[n + r:n + r + r * d].reshape(r, d).copy(),
        )
    if result.status == SolveResult.INFEASIBLE:
        return A4Check(holds=False)
    raise SampleRobustError(f"feasibility check terminated {result.status}")


def verify_witness(
    problem: TwoStageProblem,
    x: np.ndarray,
    y0: np.ndarray,
    Y: np.ndarray,
    params: Optional[SolverParams] = None,
) -> float:
    """Worst violation of the witness over the support, by direct maximization.

    Returns max over rows j of max_{z in support} h_j(z) - T_j x - W_j(y0 + Y z);
    a valid witness keeps this at or below solver noise. +inf signals a
    recession direction the witness does not cover.
    """
    x = np.asarray(x, float).reshape(-1)
    y0 = np.asarray(y0, float).reshape(-1)
    Y = np.asarray(Y, float).reshape(problem.r, problem.d)
    base = problem.T @ x + problem.W @ y0 - problem.h0
    F = problem.H - problem.W @ Y
    worst = -np.inf
    for j in range(problem.m):
        worst = max(
            worst,
            max_affine_over_region(problem.support, F[j], -float(base[j]), params=params),
        )
    return float(worst)
