"""Solver-agnostic IR for linear and second-order-cone programs.

A ConicProgram collects, in deterministic order: variables with bounds and
structured labels, a sparse minimization objective, linear rows with senses
in {>=, <=, ==}, and second-order-cone rows ||affine(z)||_2 <= z_t. Two
backends execute it: HiGHS (through scipy) for pure LPs and Clarabel for
programs with cones. Both are stateless per call, so independent programs
may be solved concurrently.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .model import Norm, tolerance

__all__ = [
    "GE",
    "LE",
    "EQ",
    "ConicProgram",
    "SolveResult",
    "SolverParams",
    "SolverFailure",
    "solve",
    "add_dual_norm_epigraph",
    "to_lp_text",
]

GE, LE, EQ = ">=", "<=", "=="
_SENSE_CODE = {GE: 0, LE: 1, EQ: 2}
_CODE_SENSE = {v: k for k, v in _SENSE_CODE.items()}

# affine expression: (variable indices, coefficients, constant)
AffExpr = tuple[np.ndarray, np.ndarray, float]


class SolverFailure(RuntimeError):
    """Backend terminated without an optimality or infeasibility certificate."""


@dataclass
class SolverParams:
    feas_tol: float = field(default_factory=lambda: tolerance("FEAS_TOL"))
    gap_tol: float = field(default_factory=lambda: tolerance("GAP_TOL"))
    backend: Optional[str] = None   # "highs" | "clarabel" | None = auto


@dataclass(frozen=True)
class SolveResult:
    status: str                     # Optimal | Infeasible | Unbounded | NumericalFailure
    objective: Optional[float]
    primal: Optional[np.ndarray]
    solve_time: float

    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NUMERICAL_FAILURE = "NumericalFailure"

    @property
    def is_optimal(self) -> bool:
        return self.status == SolveResult.OPTIMAL


class ConicProgram:
    """Incrementally built minimization program.

    Linear rows are stored as COO chunks so that block-structured builders
    can append thousands of rows without per-entry Python overhead.
    """

    def __init__(self) -> None:
        self._lb: list[float] = []
        self._ub: list[float] = []
        self.var_labels: list = []
        self._obj_idx: list[np.ndarray] = []
        self._obj_val: list[np.ndarray] = []
        self.objective_offset: float = 0.0
        self._row_i: list[np.ndarray] = []
        self._row_j: list[np.ndarray] = []
        self._row_v: list[np.ndarray] = []
        self._senses: list[np.ndarray] = []
        self._rhs: list[np.ndarray] = []
        self._num_rows = 0
        self.soc_constraints: list[tuple[int, list[AffExpr]]] = []
        self._label_index: Optional[dict] = None

    # -- variables ----------------------------------------------------------

    @property
    def num_vars(self) -> int:
        return len(self._lb)

    @property
    def num_linear_rows(self) -> int:
        return self._num_rows

    def add_var(self, label=None, lb: float = -np.inf, ub: float = np.inf) -> int:
        idx = len(self._lb)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self.var_labels.append(label)
        self._label_index = None
        return idx

    def add_vars(self, count: int, labels=None, lb=-np.inf, ub=np.inf) -> np.ndarray:
        start = len(self._lb)
        self._lb.extend(np.broadcast_to(np.asarray(lb, float), (count,)).tolist())
        self._ub.extend(np.broadcast_to(np.asarray(ub, float), (count,)).tolist())
        if labels is None:
            labels = [None] * count
        self.var_labels.extend(labels)
        self._label_index = None
        return np.arange(start, start + count)

    def index_of(self, label) -> int:
        if self._label_index is None:
            self._label_index = {
                lab: k for k, lab in enumerate(self.var_labels) if lab is not None
            }
        return self._label_index[label]

    # -- objective ----------------------------------------------------------

    def add_objective_terms(self, idx, coef) -> None:
        self._obj_idx.append(np.asarray(idx, dtype=np.int64).reshape(-1))
        self._obj_val.append(np.asarray(coef, dtype=float).reshape(-1))

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.num_vars)
        if self._obj_idx:
            np.add.at(c, np.concatenate(self._obj_idx), np.concatenate(self._obj_val))
        return c

    # -- constraints --------------------------------------------------------

    def add_linear(self, terms, sense: str, rhs: float) -> None:
        """Add one row. ``terms`` is (idx_array, coef_array) or [(idx, coef), ...]."""
        if isinstance(terms, tuple) and len(terms) == 2:
            idx, coef = terms
        else:
            pairs = list(terms)
            idx = np.array([p[0] for p in pairs], dtype=np.int64)
            coef = np.array([p[1] for p in pairs], dtype=float)
        idx = np.asarray(idx, dtype=np.int64).reshape(-1)
        coef = np.asarray(coef, dtype=float).reshape(-1)
        self._row_i.append(np.full(idx.size, self._num_rows, dtype=np.int64))
        self._row_j.append(idx)
        self._row_v.append(coef)
        self._senses.append(np.array([_SENSE_CODE[sense]], dtype=np.int8))
        self._rhs.append(np.array([float(rhs)]))
        self._num_rows += 1

    def add_rows(self, local_rows, cols, vals, senses, rhs) -> None:
        """Bulk insertion of k rows given as COO triplets with local row ids 0..k-1."""
        rhs = np.asarray(rhs, dtype=float).reshape(-1)
        k = rhs.size
        self._row_i.append(np.asarray(local_rows, dtype=np.int64) + self._num_rows)
        self._row_j.append(np.asarray(cols, dtype=np.int64))
        self._row_v.append(np.asarray(vals, dtype=float))
        if isinstance(senses, str):
            codes = np.full(k, _SENSE_CODE[senses], dtype=np.int8)
        else:
            codes = np.array([_SENSE_CODE[s] for s in senses], dtype=np.int8)
        self._senses.append(codes)
        self._rhs.append(rhs)
        self._num_rows += k

    def add_soc(self, t_index: int, components: Sequence[AffExpr]) -> None:
        """Impose ||(affine components)||_2 <= z_t."""
        comps = [
            (np.asarray(i, dtype=np.int64).reshape(-1), np.asarray(c, dtype=float).reshape(-1), float(k))
            for i, c, k in components
        ]
        self.soc_constraints.append((int(t_index), comps))

    # -- assembled views ----------------------------------------------------

    def linear_matrix(self) -> tuple[sparse.csr_matrix, np.ndarray, np.ndarray]:
        """(A, sense codes, rhs) for all linear rows, duplicates summed."""
        if self._row_i:
            i = np.concatenate(self._row_i)
            j = np.concatenate(self._row_j)
            v = np.concatenate(self._row_v)
        else:
            i = j = np.zeros(0, dtype=np.int64)
            v = np.zeros(0)
        A = sparse.coo_matrix((v, (i, j)), shape=(self._num_rows, self.num_vars)).tocsr()
        senses = np.concatenate(self._senses) if self._senses else np.zeros(0, np.int8)
        rhs = np.concatenate(self._rhs) if self._rhs else np.zeros(0)
        return A, senses, rhs

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self._lb, float), np.asarray(self._ub, float)

    def validate(self) -> None:
        n = self.num_vars
        for chunk in self._row_j:
            if chunk.size and (chunk.min() < 0 or chunk.max() >= n):
                raise ValueError("linear row references an undeclared variable index")
        for chunk in self._row_v:
            if chunk.size and not np.isfinite(chunk).all():
                raise ValueError("linear row contains non-finite coefficients")
        for chunk in self._obj_idx:
            if chunk.size and (chunk.min() < 0 or chunk.max() >= n):
                raise ValueError("objective references an undeclared variable index")
        for chunk in self._obj_val:
            if chunk.size and not np.isfinite(chunk).all():
                raise ValueError("objective contains non-finite coefficients")
        for t, comps in self.soc_constraints:
            if not (0 <= t < n):
                raise ValueError("SOC epigraph variable index out of range")
            for idx, coef, const in comps:
                if idx.size and (idx.min() < 0 or idx.max() >= n):
                    raise ValueError("SOC component references an undeclared variable index")
                if not (np.isfinite(coef).all() and np.isfinite(const)):
                    raise ValueError("SOC component contains non-finite coefficients")


# ---------------------------------------------------------------------------
# dual-norm epigraphs

def add_dual_norm_epigraph(
    program: ConicProgram,
    exprs: Sequence[AffExpr],
    t_index: int,
    norm: Norm,
    aux_label=None,
) -> None:
    """Impose ||expr||_norm <= z_t, where ``norm`` is already the dual norm.

    LINF expands to two rows per component, L1 to one auxiliary absolute
    value per component plus a summing row, and L2 to a single SOC row.
    """
    norm = Norm(norm)
    if norm == Norm.L2:
        program.add_soc(t_index, exprs)
        return
    t = np.int64(t_index)
    if norm == Norm.LINF:
        for idx, coef, const in exprs:
            # z_t - expr >= const  and  z_t + expr >= -const
            program.add_linear((np.append(idx, t), np.append(-np.asarray(coef, float), 1.0)), GE, const)
            program.add_linear((np.append(idx, t), np.append(np.asarray(coef, float), 1.0)), GE, -const)
        return
    if norm == Norm.L1:
        k = len(exprs)
        u = program.add_vars(k, labels=[(aux_label, "abs", i) if aux_label else None for i in range(k)], lb=0.0)
        for ui, (idx, coef, const) in zip(u, exprs):
            program.add_linear((np.append(idx, ui), np.append(-np.asarray(coef, float), 1.0)), GE, const)
            program.add_linear((np.append(idx, ui), np.append(np.asarray(coef, float), 1.0)), GE, -const)
        program.add_linear((np.append(u, t), np.append(-np.ones(k), 1.0)), GE, 0.0)
        return
    raise ValueError(f"unsupported norm {norm}")


# ---------------------------------------------------------------------------
# backends

def solve(program: ConicProgram, params: Optional[SolverParams] = None) -> SolveResult:
    """Execute the program on an appropriate backend.

    Pure LPs go to HiGHS; anything with second-order cones goes to Clarabel.
    Statuses map onto the backend's certificate class; a termination without
    any certificate becomes NumericalFailure.
    """
    params = params or SolverParams()
    program.validate()
    backend = params.backend or ("clarabel" if program.soc_constraints else "highs")
    start = time.perf_counter()
    if backend == "highs":
        if program.soc_constraints:
            raise ValueError("the HiGHS backend cannot handle second-order cones")
        status, obj, primal = _solve_highs(program, params)
    elif backend == "clarabel":
        status, obj, primal = _solve_clarabel(program, params)
    else:
        raise ValueError(f"unknown backend {params.backend!r}")
    elapsed = time.perf_counter() - start
    return SolveResult(status=status, objective=obj, primal=primal, solve_time=elapsed)


def _solve_highs(program: ConicProgram, params: SolverParams):
    A, senses, rhs = program.linear_matrix()
    c = program.objective_vector()
    lb, ub = program.bounds()
    ge = senses == _SENSE_CODE[GE]
    le = senses == _SENSE_CODE[LE]
    eq = senses == _SENSE_CODE[EQ]
    blocks_ub, rhs_ub = [], []
    if ge.any():
        blocks_ub.append(-A[ge])
        rhs_ub.append(-rhs[ge])
    if le.any():
        blocks_ub.append(A[le])
        rhs_ub.append(rhs[le])
    A_ub = sparse.vstack(blocks_ub).tocsr() if blocks_ub else None
    b_ub = np.concatenate(rhs_ub) if rhs_ub else None
    A_eq = A[eq] if eq.any() else None
    b_eq = rhs[eq] if eq.any() else None
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=np.column_stack([lb, ub]),
        method="highs",
        options={"primal_feasibility_tolerance": params.feas_tol,
                 "dual_feasibility_tolerance": params.feas_tol},
    )
    if res.status == 0:
        return SolveResult.OPTIMAL, float(res.fun) + program.objective_offset, np.asarray(res.x, float)
    if res.status == 2:
        return SolveResult.INFEASIBLE, None, None
    if res.status == 3:
        return SolveResult.UNBOUNDED, None, None
    return SolveResult.NUMERICAL_FAILURE, None, None


def _solve_clarabel(program: ConicProgram, params: SolverParams):
    import clarabel

    A, senses, rhs = program.linear_matrix()
    c = program.objective_vector()
    lb, ub = program.bounds()
    n = program.num_vars
    eq = senses == _SENSE_CODE[EQ]
    ge = senses == _SENSE_CODE[GE]
    le = senses == _SENSE_CODE[LE]

    blocks = []
    rhs_blocks = []
    cones = []
    if eq.any():
        blocks.append(A[eq])
        rhs_blocks.append(rhs[eq])
        cones.append(clarabel.ZeroConeT(int(eq.sum())))
    nneg = 0
    if ge.any():
        blocks.append(-A[ge])
        rhs_blocks.append(-rhs[ge])
        nneg += int(ge.sum())
    if le.any():
        blocks.append(A[le])
        rhs_blocks.append(rhs[le])
        nneg += int(le.sum())
    fin_lb = np.flatnonzero(np.isfinite(lb))
    if fin_lb.size:
        B = sparse.coo_matrix((-np.ones(fin_lb.size), (np.arange(fin_lb.size), fin_lb)), shape=(fin_lb.size, n))
        blocks.append(B)
        rhs_blocks.append(-lb[fin_lb])
        nneg += fin_lb.size
    fin_ub = np.flatnonzero(np.isfinite(ub))
    if fin_ub.size:
        B = sparse.coo_matrix((np.ones(fin_ub.size), (np.arange(fin_ub.size), fin_ub)), shape=(fin_ub.size, n))
        blocks.append(B)
        rhs_blocks.append(ub[fin_ub])
        nneg += fin_ub.size
    if nneg:
        cones.append(clarabel.NonnegativeConeT(nneg))
    for t, comps in program.soc_constraints:
        k = len(comps)
        rows_i = [np.zeros(1, dtype=np.int64)]
        cols = [np.array([t], dtype=np.int64)]
        vals = [np.array([-1.0])]
        consts = np.zeros(k + 1)
        for local, (idx, coef, const) in enumerate(comps, start=1):
            rows_i.append(np.full(idx.size, local, dtype=np.int64))
            cols.append(idx)
            vals.append(-np.asarray(coef, float))
            consts[local] = const
        B = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows_i), np.concatenate(cols))),
            shape=(k + 1, n),
        )
        blocks.append(B)
        rhs_blocks.append(consts)
        cones.append(clarabel.SecondOrderConeT(k + 1))

    if blocks:
        A_all = sparse.vstack(blocks).tocsc()
        b_all = np.concatenate(rhs_blocks)
    else:
        A_all = sparse.csc_matrix((0, n))
        b_all = np.zeros(0)
    P = sparse.csc_matrix((n, n))
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = params.feas_tol
    settings.tol_gap_abs = params.gap_tol
    settings.tol_gap_rel = params.gap_tol
    solver = clarabel.DefaultSolver(P, c, A_all, b_all, cones, settings)
    sol = solver.solve()
    name = str(sol.status)
    if name in ("Solved", "AlmostSolved"):
        x = np.asarray(sol.x, float)
        return SolveResult.OPTIMAL, float(c @ x) + program.objective_offset, x
    if name in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return SolveResult.INFEASIBLE, None, None
    if name in ("DualInfeasible", "AlmostDualInfeasible"):
        return SolveResult.UNBOUNDED, None, None
    return SolveResult.NUMERICAL_FAILURE, None, None


# ---------------------------------------------------------------------------
# debug export

def to_lp_text(program: ConicProgram, name: str = "program") -> str:
    """Render the program in LP text format for external cross-checking.

    Second-order cones have no LP-format encoding; they are emitted as
    trailing comments.
    """
    A, senses, rhs = program.linear_matrix()
    c = program.objective_vector()
    lb, ub = program.bounds()
    lines = [f"\\ {name}: {program.num_vars} vars, {program.num_linear_rows} linear rows,"
             f" {len(program.soc_constraints)} SOC rows"]
    if program.objective_offset:
        lines.append(f"\\ objective offset: {program.objective_offset!r}")
    lines.append("Minimize")
    terms = " ".join(
        f"{'+' if v >= 0 else '-'} {abs(v)!r} x{j}" for j, v in zip(np.flatnonzero(c), c[np.flatnonzero(c)])
    )
    lines.append(f" obj: {terms if terms else '0 x0' if program.num_vars else ''}")
    lines.append("Subject To")
    A = A.tocsr()
    op = {0: ">=", 1: "<=", 2: "="}
    for i in range(A.shape[0]):
        sl = slice(A.indptr[i], A.indptr[i + 1])
        body = " ".join(
            f"{'+' if v >= 0 else '-'} {abs(v)!r} x{j}" for j, v in zip(A.indices[sl], A.data[sl])
        )
        lines.append(f" r{i}: {body if body else '0 x0'} {op[int(senses[i])]} {rhs[i]!r}")
    lines.append("Bounds")
    for j in range(program.num_vars):
        lo, hi = lb[j], ub[j]
        if lo == -np.inf and hi == np.inf:
            lines.append(f" x{j} free")
        else:
            lo_s = "-inf" if lo == -np.inf else repr(lo)
            hi_s = "+inf" if hi == np.inf else repr(hi)
            lines.append(f" {lo_s} <= x{j} <= {hi_s}")
    for k, (t, comps) in enumerate(program.soc_constraints):
        parts = []
        for idx, coef, const in comps:
            body = " ".join(f"{v:+g} x{j}" for j, v in zip(idx, coef))
            parts.append(f"({body} {const:+g})")
        lines.append(f"\\ soc{k}: ||{', '.join(parts)}||_2 <= x{t}")
    lines.append("End")
    return "\n".join(lines) + "\n"
