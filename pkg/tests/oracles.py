"""Independent oracles and instance generators used by the test suite.

Everything here deliberately avoids the dualized robust counterpart: vertex
enumeration plus a direct scenario LP gives a second, independent route to
the robust optimum, and the random instance factories guarantee feasibility
by construction (slack recourse with positive cost, boxed variables).
"""

from itertools import combinations

import numpy as np

from samplerobust import conic
from samplerobust.conic import GE, ConicProgram
from samplerobust.model import (
    Norm,
    RobustConfig,
    SampleSet,
    SupportPolyhedron,
    TwoStageProblem,
)


def enumerate_polytope_vertices(A: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """All vertices of {z : A z >= b} by basis enumeration (low dimension only)."""
    A = np.asarray(A, float)
    b = np.asarray(b, float).reshape(-1)
    d = A.shape[1]
    verts = []
    for rows in combinations(range(A.shape[0]), d):
        sub = A[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        v = np.linalg.solve(sub, b[list(rows)])
        if (A @ v >= b - tol).all():
            verts.append(v)
    if not verts:
        return np.zeros((0, d))
    verts = np.asarray(verts)
    # dedupe on a coarse grid
    _, keep = np.unique(np.round(verts, 9), axis=0, return_index=True)
    return verts[np.sort(keep)]


def ball_vertices(
    support: SupportPolyhedron, center: np.ndarray, radius: float
) -> np.ndarray:
    """Vertices of (sup-norm ball around center) intersected with the support."""
    d = center.size
    A = [np.eye(d), -np.eye(d)]
    b = [center - radius, -(center + radius)]
    if support.num_rows:
        A.append(support.G)
        b.append(support.g0)
    return enumerate_polytope_vertices(np.vstack(A), np.concatenate(b))


def mp_vertex_bruteforce(
    problem: TwoStageProblem, samples: SampleSet, radius: float
) -> float:
    """Robust optimum with per-ball affine rules, via explicit vertex enumeration.

    Valid for the sup-norm ball on a bounded polyhedral support: an affine
    rule's worst case over a polytope is attained at a vertex, so imposing
    the constraints and the objective epigraph at every vertex of every ball
    is an exact finite restatement. Completely independent of the dualized
    construction.
    """
    N = len(samples)
    n, r, d = problem.n, problem.r, problem.d
    prog = ConicProgram()
    x = prog.add_vars(n)
    prog.add_objective_terms(x, problem.c)
    for i in range(N):
        verts = ball_vertices(problem.support, samples.points[i], radius)
        assert verts.shape[0] > 0, "ball has no vertices; support unbounded?"
        y0 = prog.add_vars(r)
        Y = prog.add_vars(r * d)
        s = prog.add_var()
        prog.add_objective_terms(np.array([s]), np.array([1.0 / N]))
        for v in verts:
            # s >= q'(y0 + Y v)
            idx = np.concatenate([np.array([s]), y0, Y])
            coef = np.concatenate([
                np.array([1.0]),
                -problem.q,
                -np.repeat(problem.q, d) * np.tile(v, r),
            ])
            prog.add_linear((idx, coef), GE, 0.0)
            # T x + W (y0 + Y v) >= h0 + H v
            rhs = problem.h0 + problem.H @ v
            for j in range(problem.m):
                idx = np.concatenate([x, y0, Y])
                coef = np.concatenate([
                    problem.T[j],
                    problem.W[j],
                    np.repeat(problem.W[j], d) * np.tile(v, r),
                ])
                prog.add_linear((idx, coef), GE, rhs[j])
    result = conic.solve(prog)
    assert result.is_optimal, f"brute-force program terminated {result.status}"
    return float(result.objective)


def random_feasible_instance(rng: np.random.Generator, d_max: int = 3):
    """Bounded two-stage instance with complete recourse, plus in-box samples.

    The recourse matrix carries a slack identity block with positive costs, x
    and the structural recourse variables are boxed, so every method
    (including the shared-rule one) is feasible and bounded for any radius.
    """
    n = int(rng.integers(1, 3))
    r0 = int(rng.integers(1, 3))
    m0 = int(rng.integers(1, 4))
    d = int(rng.integers(1, d_max + 1))
    B = 5.0
    T0 = rng.uniform(-1, 1, (m0, n))
    W0 = rng.uniform(-1, 1, (m0, r0))
    H0 = rng.uniform(-1, 1, (m0, d))
    h00 = rng.uniform(-1, 1, m0)
    r = r0 + m0
    # rows: structural (with slack I), then boxes for x, y0 and slacks
    m = m0 + 2 * n + 2 * r0 + m0
    T = np.zeros((m, n))
    W = np.zeros((m, r))
    h0 = np.zeros(m)
    H = np.zeros((m, d))
    T[:m0] = T0
    W[:m0, :r0] = W0
    W[:m0, r0:] = np.eye(m0)
    H[:m0] = H0
    h0[:m0] = h00
    row = m0
    for j in range(n):
        T[row, j] = 1.0
        h0[row] = -B
        row += 1
        T[row, j] = -1.0
        h0[row] = -B
        row += 1
    for k in range(r0):
        W[row, k] = 1.0
        h0[row] = -B
        row += 1
        W[row, k] = -1.0
        h0[row] = -B
        row += 1
    for k in range(m0):
        W[row, r0 + k] = 1.0
        row += 1
    lo = rng.uniform(-1.0, 0.0, d)
    hi = lo + rng.uniform(0.5, 2.0, d)
    problem = TwoStageProblem(
        c=rng.uniform(0.1, 1.0, n),
        q=np.concatenate([rng.uniform(-0.5, 0.5, r0), rng.uniform(0.5, 2.0, m0)]),
        T=T, W=W, h0=h0, H=H,
        support=SupportPolyhedron.box(lo, hi),
    )
    N = int(rng.integers(2, 5))
    samples = SampleSet(rng.uniform(lo, hi, size=(N, d)), source="test")
    return problem, samples


def random_small_instance(rng: np.random.Generator):
    """Tiny instance (few rows, box support) sized for vertex enumeration.

    One recourse variable with a strictly positive column and unit cost keeps
    the second stage feasible and bounded; the first-stage cost is small
    enough that no direction of x is a descent ray.
    """
    d = int(rng.integers(1, 4))
    m = int(rng.integers(2, 5))
    w = rng.uniform(0.5, 1.5, (m, 1))
    # ratios T_j / w_j straddle the first-stage cost, which bounds x both ways
    ratio = rng.uniform(0.2, 1.0, m)
    ratio[0], ratio[1] = 0.2, 1.0
    Tcol = (ratio * w[:, 0]).reshape(m, 1)
    H = rng.uniform(-1.0, 1.0, (m, d))
    h0 = rng.uniform(-0.5, 0.5, m)
    lo = rng.uniform(-1.5, -0.2, d)
    hi = lo + rng.uniform(0.5, 2.0, d)
    problem = TwoStageProblem(
        c=np.array([0.5]),
        q=np.array([1.0]),
        T=Tcol, W=w, h0=h0, H=H,
        support=SupportPolyhedron.box(lo, hi),
    )
    N = int(rng.integers(2, 5))
    samples = SampleSet(rng.uniform(lo, hi, size=(N, d)), source="test")
    radius = float(rng.uniform(0.1, 0.6))
    return problem, samples, radius


def solve_objective(artifacts) -> float:
    result = conic.solve(artifacts.program)
    assert result.is_optimal, f"expected Optimal, got {result.status}"
    return float(result.objective)
