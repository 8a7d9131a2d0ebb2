"""Problem data for two-stage linear programs under uncertainty.

The recourse structure is

    min_x  c'x + E[ Q(x, xi) ],      Q(x, xi) = min_y { q'y : T x + W y >= h0 + H xi },

with the random vector xi supported inside a polyhedron {z : G z >= g0}.
Deterministic first-stage constraints are expected to be folded into the
(T, W, h0, H) block as rows with zero W and H coefficients.

All containers here are immutable after construction; operations are pure.
"""

from __future__ import annotations

import csv
import enum
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "Norm",
    "dual_norm",
    "SupportPolyhedron",
    "TwoStageProblem",
    "SampleSet",
    "RobustConfig",
    "Policy",
    "PolicySolution",
    "Infeasible",
    "INFEASIBLE",
    "SampleRobustError",
    "InstanceFormatError",
    "DimensionMismatchError",
    "SupportViolationError",
    "UnboundedSecondStageError",
    "load_problem",
    "save_problem",
    "problem_to_dict",
    "problem_from_dict",
    "load_samples",
    "save_samples",
    "tolerance",
]


# ---------------------------------------------------------------------------
# errors

class SampleRobustError(Exception):
    """Base class for errors raised by this package."""


class InstanceFormatError(SampleRobustError):
    """Instance or sample file could not be parsed."""


class DimensionMismatchError(SampleRobustError):
    """Problem matrices have inconsistent shapes; message names the field."""


class SupportViolationError(SampleRobustError):
    """A sample point lies outside the declared support polyhedron."""


class UnboundedSecondStageError(SampleRobustError):
    """The second-stage program is unbounded below for some (x, xi)."""


# ---------------------------------------------------------------------------
# tolerances

_TOL_DEFAULTS = {
    "SUPPORT_TOL": 1e-9,   # slack allowed in G xi >= g0 membership checks
    "BALL_TOL": 1e-9,      # slack allowed in ||xi - center|| <= radius checks
    "FEAS_TOL": 1e-7,      # solver primal feasibility target
    "GAP_TOL": 1e-7,       # solver duality-gap target
}


def tolerance(name: str, default: Optional[float] = None) -> float:
    """Resolve a named tolerance, honoring SAMPLEROBUST_<NAME> env overrides."""
    if default is None:
        default = _TOL_DEFAULTS[name]
    raw = os.environ.get(f"SAMPLEROBUST_{name}")
    return float(raw) if raw is not None else default


# ---------------------------------------------------------------------------
# norms

class Norm(str, enum.Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"


def dual_norm(norm: Norm) -> Norm:
    """Dual-norm pairing: l1 <-> linf, l2 self-dual."""
    return {Norm.L1: Norm.LINF, Norm.L2: Norm.L2, Norm.LINF: Norm.L1}[Norm(norm)]


def vector_norm(v: np.ndarray, norm: Norm) -> float:
    ords = {Norm.L1: 1, Norm.L2: 2, Norm.LINF: np.inf}
    return float(np.linalg.norm(v, ord=ords[Norm(norm)]))


# ---------------------------------------------------------------------------
# domain types

def _ro(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class SupportPolyhedron:
    """Support constraint set {z in R^d : G z >= g0}.

    Zero rows in G are rejected; zero rows encode either a vacuous or an
    infeasible constraint and are always a modeling mistake. An empty G
    (zero rows) encodes the free support R^d.
    """

    G: np.ndarray
    g0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "G", _ro(np.atleast_2d(self.G) if np.size(self.G) else np.asarray(self.G, float).reshape(0, -1)))
        object.__setattr__(self, "g0", _ro(np.asarray(self.g0, float).reshape(-1)))
        if self.G.shape[0] != self.g0.shape[0]:
            raise DimensionMismatchError(
                f"support: G has {self.G.shape[0]} rows but g0 has length {self.g0.shape[0]}"
            )
        if self.G.shape[0] and not np.abs(self.G).sum(axis=1).all():
            raise DimensionMismatchError("support: G contains an all-zero row")

    @property
    def num_rows(self) -> int:
        return self.G.shape[0]

    @property
    def dim(self) -> int:
        return self.G.shape[1]

    @property
    def is_free(self) -> bool:
        return self.num_rows == 0

    def contains(self, points: np.ndarray, tol: Optional[float] = None) -> np.ndarray:
        """Componentwise membership test G p >= g0 - tol, one bool per point."""
        if tol is None:
            tol = tolerance("SUPPORT_TOL")
        pts = np.atleast_2d(np.asarray(points, float))
        if self.is_free:
            return np.ones(pts.shape[0], dtype=bool)
        return (pts @ self.G.T >= self.g0 - tol).all(axis=1)

    @staticmethod
    def free(dim: int) -> "SupportPolyhedron":
        return SupportPolyhedron(np.zeros((0, dim)), np.zeros(0))

    @staticmethod
    def box(lower: np.ndarray, upper: np.ndarray) -> "SupportPolyhedron":
        lower = np.asarray(lower, float)
        upper = np.asarray(upper, float)
        d = lower.size
        G = np.vstack([np.eye(d), -np.eye(d)])
        g0 = np.concatenate([lower, -upper])
        return SupportPolyhedron(G, g0)


@dataclass(frozen=True, eq=False)
class TwoStageProblem:
    """Matrices and vectors of the two-stage recourse model plus its support."""

    c: np.ndarray             # (n,) first-stage cost
    q: np.ndarray             # (r,) second-stage cost
    T: np.ndarray             # (m, n)
    W: np.ndarray             # (m, r)
    h0: np.ndarray            # (m,)
    H: np.ndarray             # (m, d)
    support: SupportPolyhedron
    names: Optional[dict] = None

    def __post_init__(self):
        c = np.asarray(self.c, float).reshape(-1)
        q = np.asarray(self.q, float).reshape(-1)
        h0 = np.asarray(self.h0, float).reshape(-1)
        n, r, m = c.size, q.size, h0.size
        T = np.asarray(self.T, float).reshape(m, -1) if np.size(self.T) else np.zeros((m, n))
        W = np.asarray(self.W, float).reshape(m, -1) if np.size(self.W) else np.zeros((m, r))
        H = np.asarray(self.H, float).reshape(m, -1) if np.size(self.H) else np.zeros((m, 0))
        for nm, arr in (("c", c), ("q", q), ("T", T), ("W", W), ("h0", h0), ("H", H)):
            if not np.isfinite(arr).all():
                raise DimensionMismatchError(f"{nm}: contains non-finite entries")
        if r < 1:
            raise DimensionMismatchError("q: second stage needs at least one variable (r >= 1)")
        if m < 1:
            raise DimensionMismatchError("h0: at least one constraint row required (m >= 1)")
        if T.shape != (m, n):
            raise DimensionMismatchError(f"T: expected shape ({m}, {n}), got {T.shape}")
        if W.shape != (m, r):
            raise DimensionMismatchError(f"W: expected shape ({m}, {r}), got {W.shape}")
        d = H.shape[1]
        if d < 1:
            raise DimensionMismatchError("H: uncertainty dimension must be >= 1")
        if H.shape != (m, d):
            raise DimensionMismatchError(f"H: expected shape ({m}, {d}), got {H.shape}")
        if not self.support.is_free and self.support.dim != d:
            raise DimensionMismatchError(
                f"G: support dimension {self.support.dim} != uncertainty dimension {d}"
            )
        for nm, arr in (("c", c), ("q", q), ("T", T), ("W", W), ("h0", h0), ("H", H)):
            object.__setattr__(self, nm, _ro(arr))

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def r(self) -> int:
        return self.q.size

    @property
    def m(self) -> int:
        return self.h0.size

    @property
    def d(self) -> int:
        return self.H.shape[1]

    def h(self, xi: np.ndarray) -> np.ndarray:
        """Right-hand side h0 + H xi for one realization."""
        return self.h0 + self.H @ np.asarray(xi, float)


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Historical realizations, one row per sample, with provenance tags."""

    points: np.ndarray        # (N, d)
    seed: Optional[int] = None
    source: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.shape[0] < 1:
            raise InstanceFormatError("sample set is empty")
        if not np.isfinite(pts).all():
            raise InstanceFormatError("sample set contains non-finite entries")
        object.__setattr__(self, "points", _ro(pts))

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def validate_support(self, support: SupportPolyhedron, tol: Optional[float] = None) -> None:
        """Raise SupportViolationError if any point falls outside the support."""
        ok = support.contains(self.points, tol)
        if not ok.all():
            bad = int(np.flatnonzero(~ok)[0])
            raise SupportViolationError(
                f"sample {bad} violates the support polyhedron: point={self.points[bad].tolist()}"
            )


@dataclass(frozen=True)
class RobustConfig:
    """Ball shape around each data point: norm choice and radius."""

    norm: Norm
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "norm", Norm(self.norm))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius < 0:
            raise ValueError(f"radius must be nonnegative, got {self.radius}")


@dataclass(frozen=True, eq=False)
class Policy:
    """One affine recourse rule y(z) = y0 + Y z."""

    y0: np.ndarray            # (r,)
    Y: np.ndarray             # (r, d)

    def __post_init__(self):
        object.__setattr__(self, "y0", _ro(np.asarray(self.y0, float).reshape(-1)))
        object.__setattr__(self, "Y", _ro(np.atleast_2d(np.asarray(self.Y, float))))

    def __call__(self, xi: np.ndarray) -> np.ndarray:
        return self.y0 + self.Y @ np.asarray(xi, float)


@dataclass(frozen=True, eq=False)
class PolicySolution:
    """First-stage decision plus the affine recourse rules that certify it.

    ``policies`` holds one rule per training sample for the multi-policy and
    per-scenario (static) builders, and a single shared rule for the
    single-policy builder. ``centers`` are the training samples the rules
    were fit around; they are needed to decide which rule covers a new
    realization.
    """

    x: np.ndarray
    policies: tuple[Policy, ...]
    objective: float
    method: str               # "SAA" | "SP" | "MP"
    radius: float
    norm: Norm
    centers: np.ndarray       # (N, d) training samples

    def __post_init__(self):
        object.__setattr__(self, "x", _ro(np.asarray(self.x, float).reshape(-1)))
        object.__setattr__(self, "policies", tuple(self.policies))
        object.__setattr__(self, "objective", float(self.objective))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "norm", Norm(self.norm))
        object.__setattr__(self, "centers", _ro(np.atleast_2d(np.asarray(self.centers, float))))

    @property
    def n_train(self) -> int:
        return self.centers.shape[0]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "objective": self.objective,
            "radius": self.radius,
            "norm": self.norm.value,
            "x": self.x.tolist(),
            "policies": [{"y0": p.y0.tolist(), "Y": p.Y.tolist()} for p in self.policies],
            "centers": self.centers.tolist(),
        }

    @staticmethod
    def from_dict(data: dict) -> "PolicySolution":
        return PolicySolution(
            x=np.asarray(data["x"], float),
            policies=tuple(Policy(np.asarray(p["y0"], float), np.asarray(p["Y"], float))
                           for p in data["policies"]),
            objective=data["objective"],
            method=data["method"],
            radius=data["radius"],
            norm=Norm(data["norm"]),
            centers=np.asarray(data["centers"], float),
        )


class Infeasible:
    """Marker for an infinite second-stage cost (no feasible recourse)."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "Infeasible"


INFEASIBLE = Infeasible()


# ---------------------------------------------------------------------------
# instance I/O

_INSTANCE_KEYS = ("n", "r", "m", "d", "c", "q", "T", "W", "h0", "H", "G", "g0")


def problem_to_dict(problem: TwoStageProblem) -> dict:
    out = {
        "n": problem.n,
        "r": problem.r,
        "m": problem.m,
        "d": problem.d,
        "c": problem.c.tolist(),
        "q": problem.q.tolist(),
        "T": problem.T.tolist(),
        "W": problem.W.tolist(),
        "h0": problem.h0.tolist(),
        "H": problem.H.tolist(),
        "G": problem.support.G.tolist(),
        "g0": problem.support.g0.tolist(),
    }
    if problem.names is not None:
        out["names"] = problem.names
    return out


def problem_from_dict(data: dict) -> TwoStageProblem:
    missing = [k for k in _INSTANCE_KEYS if k not in data]
    if missing:
        raise InstanceFormatError(f"instance is missing fields: {missing}")
    n, r, m, d = (int(data[k]) for k in ("n", "r", "m", "d"))
    G = np.asarray(data["G"], float)
    g0 = np.asarray(data["g0"], float).reshape(-1)
    if g0.size == 0:
        support = SupportPolyhedron.free(d)
    else:
        support = SupportPolyhedron(G.reshape(g0.size, -1), g0)
        if support.dim != d:
            raise DimensionMismatchError(f"G: expected {d} columns, got {support.dim}")
    def grab(key: str, shape: tuple) -> np.ndarray:
        arr = np.asarray(data[key], float)
        want = shape if all(s > 0 for s in shape) else shape
        if arr.size != int(np.prod(shape)):
            raise DimensionMismatchError(f"{key}: expected shape {shape}, got size {arr.size}")
        return arr.reshape(shape)
    problem = TwoStageProblem(
        c=grab("c", (n,)),
        q=grab("q", (r,)),
        T=grab("T", (m, n)),
        W=grab("W", (m, r)),
        h0=grab("h0", (m,)),
        H=grab("H", (m, d)),
        support=support,
        names=data.get("names"),
    )
    return problem


def load_problem(path: str | Path) -> TwoStageProblem:
    """Load and validate an instance file (JSON, one object)."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InstanceFormatError(f"cannot parse instance file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InstanceFormatError(f"instance file {path} must contain one JSON object")
    return problem_from_dict(data)


def save_problem(problem: TwoStageProblem, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_dict(problem), fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# sample I/O: CSV with d columns, one row per sample, optional header

def load_samples(
    path: str | Path,
    support: Optional[SupportPolyhedron] = None,
    seed: Optional[int] = None,
    source: str = "",
    tol: Optional[float] = None,
) -> SampleSet:
    rows: list[list[float]] = []
    try:
        with open(path, newline="") as fh:
            for lineno, rec in enumerate(csv.reader(fh)):
                if not rec or all(not cell.strip() for cell in rec):
                    continue
                try:
                    rows.append([float(cell) for cell in rec])
                except ValueError:
                    if lineno == 0:
                        continue  # header row
                    raise InstanceFormatError(f"{path}: non-numeric value on line {lineno + 1}")
    except OSError as exc:
        raise InstanceFormatError(f"cannot read sample file {path}: {exc}") from exc
    if not rows:
        raise InstanceFormatError(f"{path}: no sample rows found")
    width = len(rows[0])
    if any(len(rec) != width for rec in rows):
        raise InstanceFormatError(f"{path}: ragged rows (expected {width} columns)")
    samples = SampleSet(np.asarray(rows, float), seed=seed, source=source or str(path))
    if support is not None:
        samples.validate_support(support, tol)
    return samples


def save_samples(samples: SampleSet, path: str | Path, header: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow([f"xi{k}" for k in range(samples.dim)])
        for row in samples.points:
            writer.writerow([repr(float(v)) for v in row])
