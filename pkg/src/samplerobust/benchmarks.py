"""Seeded benchmark families, distribution samplers, and radius schedules.

Randomness uses numpy's counter-based Philox generator throughout: instance
geometry and demand sampling run on disjoint 128-bit key streams derived
from one user seed, and each sampled point gets its own jumped substream.
This makes every artifact bit-reproducible for a fixed seed and numpy
version, independent of batching or thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .model import (
    SampleRobustError,
    SampleSet,
    SupportPolyhedron,
    TwoStageProblem,
)

__all__ = [
    "DistributionSpec",
    "RejectionExhaustedError",
    "sample",
    "gen_inventory",
    "gen_scheduling",
    "gen_example3",
    "closed_form_example3",
    "gen_example2",
    "scheduling_recursion_cost",
    "radius_schedule",
]

_MASK64 = (1 << 64) - 1
_STREAM_GEOMETRY = 0x6E07
_STREAM_SAMPLES = 0x5A3D


def _generator(seed: int, stream: int) -> np.random.Philox:
    key = (int(seed) & _MASK64) | (int(stream) << 64)
    return np.random.Philox(key=key)


class RejectionExhaustedError(SampleRobustError):
    """Rejection sampling hit the attempt cap without an accepted point."""


@dataclass(frozen=True, eq=False)
class DistributionSpec:
    """Componentwise product distribution with a polyhedral rejection target.

    ``mean`` and ``std`` may be scalars or per-component vectors. Points are
    drawn independently per component and accepted only inside ``truncation``.
    """

    kind: str                     # uniform | normal | lognormal
    mean: Union[float, np.ndarray]
    std: Union[float, np.ndarray]
    dim: int
    truncation: SupportPolyhedron
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("uniform", "normal", "lognormal"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        mean = np.broadcast_to(np.asarray(self.mean, float), (self.dim,)).copy()
        std = np.broadcast_to(np.asarray(self.std, float), (self.dim,)).copy()
        if (std <= 0).any():
            raise ValueError("std must be strictly positive in every component")
        if self.kind == "lognormal" and (mean <= 0).any():
            raise ValueError("lognormal needs strictly positive means")
        if not self.truncation.contains(mean[None, :], tol=0.0)[0]:
            raise ValueError("rejection target does not contain the mean point")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "mean": np.asarray(self.mean).tolist(),
            "std": np.asarray(self.std).tolist(),
            "dim": self.dim,
            "seed": self.seed,
            "truncation": {
                "G": self.truncation.G.tolist(),
                "g0": self.truncation.g0.tolist(),
            },
        }

    @staticmethod
    def from_dict(data: dict) -> "DistributionSpec":
        tr = data["truncation"]
        g0 = np.asarray(tr["g0"], float).reshape(-1)
        if g0.size == 0:
            trunc = SupportPolyhedron.free(int(data["dim"]))
        else:
            trunc = SupportPolyhedron(np.asarray(tr["G"], float).reshape(g0.size, -1), g0)
        return DistributionSpec(
            kind=data["kind"],
            mean=np.asarray(data["mean"], float),
            std=np.asarray(data["std"], float),
            dim=int(data["dim"]),
            truncation=trunc,
            seed=int(data["seed"]),
        )


def _draw(gen: np.random.Generator, spec: DistributionSpec) -> np.ndarray:
    mean, std = spec.mean, spec.std
    if spec.kind == "uniform":
        half = math.sqrt(3.0) * std
        return gen.uniform(mean - half, mean + half)
    if spec.kind == "normal":
        return gen.normal(mean, std)
    # moment-matched pre-truncation lognormal
    sigma2 = np.log1p((std / mean) ** 2)
    mu = np.log(mean) - sigma2 / 2.0
    return gen.lognormal(mu, np.sqrt(sigma2))


def sample(spec: DistributionSpec, count: int, attempt_cap: int = 10 ** 6) -> SampleSet:
    """Draw i.i.d. points, rejecting those outside the truncation target.

    Each point index runs on its own jumped Philox substream, so the result
    is independent of any batching or parallel split.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    base = _generator(spec.seed, _STREAM_SAMPLES)
    points = np.empty((count, spec.dim))
    for p in range(count):
        gen = np.random.Generator(base.jumped(p))
        for _ in range(attempt_cap):
            cand = _draw(gen, spec)
            if spec.truncation.contains(cand[None, :], tol=0.0)[0]:
                points[p] = cand
                break
        else:
            raise RejectionExhaustedError(
                f"no accepted draw for point {p} within {attempt_cap} attempts"
            )
    return SampleSet(points, seed=spec.seed, source=f"{spec.kind}(d={spec.dim})")


# ---------------------------------------------------------------------------
# capacitated network inventory family

def gen_inventory(
    n: int, K: float, seed: int, kind: str = "uniform"
) -> tuple[TwoStageProblem, DistributionSpec]:
    """Network inventory instance: stock up front, transshipment after demand.

    ``n`` locations sit at 2D standard-normal positions; transport cost is
    Euclidean distance, per-unit stock cost is 1, stock capacity is K, and
    arc capacities are uniform fractions of K/(n-1). Demands live in the box
    [0, K]^n; the sampling distribution is additionally truncated to total
    demand at most sqrt(n) K.
    """
    if n < 2:
        raise ValueError("inventory instance needs n >= 2 locations")
    if K <= 0:
        raise ValueError("capacity K must be positive")
    rng = np.random.Generator(_generator(seed, _STREAM_GEOMETRY))
    positions = rng.normal(size=(n, 2))
    u = rng.uniform(size=(n, n))
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    r = len(pairs)
    dist = np.array([np.linalg.norm(positions[i] - positions[j]) for i, j in pairs])
    b = np.array([K / (n - 1) * u[i, j] for i, j in pairs])

    m = n + 2 * n + 2 * r
    T = np.zeros((m, n))
    W = np.zeros((m, r))
    h0 = np.zeros(m)
    H = np.zeros((m, n))
    # demand balance: x_i - outflow_i + inflow_i >= xi_i
    for i in range(n):
        T[i, i] = 1.0
        H[i, i] = 1.0
    for k, (i, j) in enumerate(pairs):
        W[i, k] -= 1.0
        W[j, k] += 1.0
    row = n
    for i in range(n):                  # 0 <= x_i
        T[row, i] = 1.0
        row += 1
    for i in range(n):                  # x_i <= K
        T[row, i] = -1.0
        h0[row] = -K
        row += 1
    for k in range(r):                  # 0 <= y_k
        W[row, k] = 1.0
        row += 1
    for k in range(r):                  # y_k <= b_k
        W[row, k] = -1.0
        h0[row] = -b[k]
        row += 1

    support = SupportPolyhedron.box(np.zeros(n), np.full(n, K))
    trunc = SupportPolyhedron(
        np.vstack([np.eye(n), -np.eye(n), -np.ones((1, n))]),
        np.concatenate([np.zeros(n), np.full(n, -K), [-math.sqrt(n) * K]]),
    )
    problem = TwoStageProblem(
        c=np.ones(n), q=dist, T=T, W=W, h0=h0, H=H, support=support,
        names={"pairs": pairs},
    )
    spec = DistributionSpec(
        kind=kind, mean=K / 2.0, std=K / math.sqrt(12.0), dim=n,
        truncation=trunc, seed=seed,
    )
    return problem, spec


# ---------------------------------------------------------------------------
# appointment scheduling family

def gen_scheduling(
    n: int, c: float, seed: int, kind: str = "uniform"
) -> tuple[TwoStageProblem, DistributionSpec]:
    """Daily appointment schedule: allotted slots first, waits and overtime after.

    Patient durations have means uniform on [30, 60] and standard deviations
    uniform on [0, 0.3 mean]; the working day is the total mean plus half the
    Euclidean norm of the deviations. Waits follow
    w_{i+1} = max(w_i + xi_i - x_i, 0) with overtime billed at rate ``c``.
    """
    if n < 1:
        raise ValueError("scheduling instance needs n >= 1 patients")
    rng = np.random.Generator(_generator(seed, _STREAM_GEOMETRY))
    mu = rng.uniform(30.0, 60.0, size=n)
    sigma = rng.uniform(0.0, 0.3 * mu)
    while (sigma <= 0).any():           # zero deviation is a measure-zero draw
        sigma = rng.uniform(0.0, 0.3 * mu)
    horizon = float(mu.sum() + 0.5 * np.linalg.norm(sigma))

    r = n + 1                           # waits w_1..w_n and overtime w_{n+1}
    m = 3 * n + 3
    T = np.zeros((m, n))
    W = np.zeros((m, r))
    h0 = np.zeros(m)
    H = np.zeros((m, n))
    row = 0
    for i in range(n):                  # x_i + w_{i+1} - w_i >= xi_i
        T[row, i] = 1.0
        W[row, i + 1] = 1.0
        W[row, i] = -1.0
        H[row, i] = 1.0
        row += 1
    for k in range(r):                  # w_k >= 0
        W[row, k] = 1.0
        row += 1
    W[row, 0] = -1.0                    # w_1 <= 0, pinning the first wait to zero
    row += 1
    T[row] = -1.0                       # sum x <= horizon
    h0[row] = -horizon
    row += 1
    for i in range(n):                  # x_i >= 0
        T[row, i] = 1.0
        row += 1

    support = SupportPolyhedron(np.eye(n), np.zeros(n))
    q = np.ones(r)
    q[-1] = c
    problem = TwoStageProblem(
        c=np.zeros(n), q=q, T=T, W=W, h0=h0, H=H, support=support,
        names={"horizon": horizon, "mu": mu.tolist(), "sigma": sigma.tolist()},
    )
    spec = DistributionSpec(
        kind=kind, mean=mu, std=sigma, dim=n, truncation=support, seed=seed,
    )
    return problem, spec


def scheduling_recursion_cost(x: np.ndarray, xi: np.ndarray, overtime_cost: float) -> float:
    """Closed-form second-stage cost of a schedule via the waiting recursion."""
    x = np.asarray(x, float).reshape(-1)
    xi = np.asarray(xi, float).reshape(-1)
    n = x.size
    w = np.zeros(n + 1)
    for i in range(n):
        w[i + 1] = max(w[i] + xi[i] - x[i], 0.0)
    return float(w[:n].sum() + overtime_cost * w[n])


# ---------------------------------------------------------------------------
# one-dimensional closed-form family

def gen_example3() -> TwoStageProblem:
    """Scalar coverage problem: pay x up front, x must cover the realization.

    Support is [0, 2]; the second stage has zero cost and is feasible iff
    x >= xi, so optimal costs have known closed forms for every method.
    """
    return TwoStageProblem(
        c=np.array([1.0]),
        q=np.array([0.0]),
        T=np.array([[1.0]]),
        W=np.array([[0.0]]),
        h0=np.array([0.0]),
        H=np.array([[1.0]]),
        support=SupportPolyhedron.box(np.array([0.0]), np.array([2.0])),
    )


def closed_form_example3(samples, radius: float, method: str) -> float:
    """Known optimal cost of the scalar coverage problem.

    SAA: max of the samples. MP/SRO: max plus the radius, capped at the
    support's upper end. FEAS: the fully robust value 2.
    """
    if isinstance(samples, SampleSet):
        pts = samples.points.reshape(-1)
    else:
        pts = np.asarray(samples, float).reshape(-1)
    top = float(pts.max())
    method = method.upper()
    if method == "SAA":
        return top
    if method in ("MP", "SRO"):
        return min(top + float(radius), 2.0)
    if method == "FEAS":
        return 2.0
    raise ValueError(f"no closed form for method {method!r}")


# ---------------------------------------------------------------------------
# two-dimensional no-single-rule example

def gen_example2() -> TwoStageProblem:
    """Feasibility probe whose recourse needs |z1 - z2|, which no affine rule gives.

    One scalar recourse y must satisfy y >= |z1 - z2| and y <= 2 - |z1 + z2|
    on the box ||z||_inf <= 1. Pointwise recourse always exists, but a single
    affine rule feasible on the whole box does not. A dummy first-stage
    variable bounded in [0, 1] keeps the first stage nonempty.
    """
    T = np.zeros((6, 1))
    W = np.zeros((6, 1))
    h0 = np.zeros(6)
    H = np.zeros((6, 2))
    W[0, 0] = 1.0                       # y >= z1 - z2
    H[0] = (1.0, -1.0)
    W[1, 0] = 1.0                       # y >= z2 - z1
    H[1] = (-1.0, 1.0)
    W[2, 0] = -1.0                      # y <= z1 + z2 + 2
    h0[2] = -2.0
    H[2] = (-1.0, -1.0)
    W[3, 0] = -1.0                      # y <= -z1 - z2 + 2
    h0[3] = -2.0
    H[3] = (1.0, 1.0)
    T[4, 0] = 1.0                       # 0 <= x <= 1 (dummy)
    T[5, 0] = -1.0
    h0[5] = -1.0
    return TwoStageProblem(
        c=np.array([0.0]),
        q=np.array([1.0]),
        T=T, W=W, h0=h0, H=H,
        support=SupportPolyhedron.box(np.array([-1.0, -1.0]), np.array([1.0, 1.0])),
    )


# ---------------------------------------------------------------------------
# radius schedules

def radius_schedule(
    kind: str,
    N: int,
    kappa: float = 1.0,
    exponent: Optional[float] = None,
    k: Optional[float] = None,
    d: Optional[int] = None,
) -> float:
    """Ball radius as a function of the sample count.

    ``power`` gives kappa * N^(-exponent); the exponent may instead be derived
    from a moment order ``k`` and dimension ``d`` as 1/(k * max(d, 2)).
    ``constant`` ignores N and returns kappa. Computed through exp2 so that
    power-of-two sample counts with dyadic exponents come out exact.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    if kind == "constant":
        return float(kappa)
    if kind != "power":
        raise ValueError(f"unknown schedule kind {kind!r}")
    if exponent is None:
        if k is None or d is None:
            raise ValueError("power schedule needs an exponent or (k, d)")
        exponent = 1.0 / (k * max(d, 2))
    return float(kappa * 2.0 ** (-exponent * math.log2(N)))
