"""Three-objective frontier geometry.

Objectives: ``score`` is maximized; ``latency_ms`` and ``peak_memory_bytes``
are minimized. Internally points are mapped to a pure minimization space
``(-score, latency, memory)``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError


class EmptyFrontier(ValueError):
    pass


class BadReference(ValueError):
    pass


class FrontierMode(str, Enum):
    NON_DOMINATED = "NonDominated"
    LOWER_CONVEX_HULL = "LowerConvexHull"

    @classmethod
    def parse(cls, value: "FrontierMode | str") -> "FrontierMode":
        aliases = {"nd": cls.NON_DOMINATED, "hull": cls.LOWER_CONVEX_HULL}
        if isinstance(value, str) and value.lower() in aliases:
            return aliases[value.lower()]
        return cls(value)


@dataclass(frozen=True)
class ObjectivePoint:
    score: float
    latency_ms: float
    peak_memory_bytes: float
    payload: Any = None

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.objectives):
            raise ValueError(f"objectives must be finite: {self.objectives}")

    @property
    def objectives(self) -> tuple[float, float, float]:
        return (self.score, self.latency_ms, self.peak_memory_bytes)


@dataclass(frozen=True)
class Frontier:
    points: tuple[ObjectivePoint, ...]
    mode: FrontierMode = FrontierMode.NON_DOMINATED

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def payloads(self) -> list[Any]:
        return [p.payload for p in self.points]


def _as_min_array(points: Sequence[ObjectivePoint]) -> np.ndarray:
    return np.array([(-p.score, p.latency_ms, p.peak_memory_bytes) for p in points], dtype=float)


def dominates(a: ObjectivePoint, b: ObjectivePoint) -> bool:
    """Weakly better everywhere, strictly better somewhere."""
    ge = a.score >= b.score and a.latency_ms <= b.latency_ms and a.peak_memory_bytes <= b.peak_memory_bytes
    gt = a.score > b.score or a.latency_ms < b.latency_ms or a.peak_memory_bytes < b.peak_memory_bytes
    return ge and gt


class _Staircase:
    """2-D non-dominated staircase (x ascending, y descending) for the
    slicing hypervolume."""

    def __init__(self):
        self.xs: list[float] = []
        self.ys: list[float] = []

    def covers(self, x: float, y: float) -> bool:
        """True if some stored point is <= (x, y) in both coordinates."""
        i = bisect.bisect_right(self.xs, x)
        return i > 0 and self.ys[i - 1] <= y

    def insert(self, x: float, y: float) -> None:
        if self.covers(x, y):
            return
        i = bisect.bisect_right(self.xs, x)
        j = i
        while j < len(self.xs) and self.ys[j] >= y:
            j += 1
        # points at x exactly with higher y were placed left of i
        k = i
        while k > 0 and self.xs[k - 1] == x:
            k -= 1
        self.xs[k:j] = [x]
        self.ys[k:j] = [y]

    def area(self, ref_x: float, ref_y: float) -> float:
        if not self.xs:
            return 0.0
        xs = np.asarray(self.xs)
        ys = np.asarray(self.ys)
        widths = np.diff(np.append(xs, ref_x))
        return float(widths @ (ref_y - ys))


def non_dominated_indices(points: Sequence[ObjectivePoint], epsilon: float = 0.0) -> list[int]:
    """Indices (ascending) of the points no other point dominates.

    With ``epsilon > 0`` a point is also discarded when another point is at
    least as good on score and within a relative ``epsilon`` on both costs.
    """
    if not points:
        return []
    x = _as_min_array(points)
    if epsilon > 0:
        return _eps_non_dominated(x, epsilon)
    # Sweep unique rows in lexicographic order; only earlier rows can
    # dominate later ones, so a 2-D staircase of the remaining two columns
    # answers each query. Exact duplicates share their row's verdict.
    rows, inverse = np.unique(x, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    stairs = _Staircase()
    survives = np.zeros(len(rows), dtype=bool)
    for r, (_, y, z) in enumerate(rows):
        if not stairs.covers(y, z):
            survives[r] = True
            stairs.insert(y, z)
    return [int(i) for i in np.flatnonzero(survives[inverse])]


def _eps_non_dominated(x: np.ndarray, eps: float) -> list[int]:
    # greedy over the exact frontier in lexicographic order, so of two points
    # within epsilon of each other the first one survives
    exact = non_dominated_indices([ObjectivePoint(-a, b, c) for a, b, c in x])
    order = sorted(exact, key=lambda i: tuple(x[i]))
    kept: list[int] = []
    for i in order:
        p = x[i]
        covered = any(
            x[j, 0] <= p[0] and x[j, 1] <= p[1] * (1 + eps) and x[j, 2] <= p[2] * (1 + eps)
            and bool(np.any(x[j] < p))
            for j in kept
        )
        if not covered:
            kept.append(i)
    return sorted(kept)


def non_dominated(points: Iterable[ObjectivePoint], epsilon: float = 0.0) -> Frontier:
    pts = list(points)
    idx = non_dominated_indices(pts, epsilon)
    return Frontier(tuple(pts[i] for i in idx), FrontierMode.NON_DOMINATED)


def _supported(x: np.ndarray, tol: float) -> list[int]:
    """Indices of points minimizing some nonnegative weighting of the columns.

    For each candidate p solve ``max t s.t. w.(q - p) >= t for all q,
    w >= 0, sum(w) = 1``; p lies on the lower hull iff the optimum is >= 0.
    """
    n, d = x.shape
    if n <= 1:
        return list(range(n))
    span = x.max(axis=0) - x.min(axis=0)
    span[span == 0] = 1.0
    z = (x - x.min(axis=0)) / span
    keep = []
    c = np.zeros(d + 1)
    c[-1] = -1.0  # maximize t
    a_eq = np.ones((1, d + 1))
    a_eq[0, -1] = 0.0
    bounds = [(0, None)] * d + [(None, None)]
    for i in range(n):
        diff = z - z[i]
        # t - w.diff_q <= 0
        a_ub = np.hstack([-diff, np.ones((n, 1))])
        res = linprog(c, A_ub=a_ub, b_ub=np.zeros(n), A_eq=a_eq, b_eq=[1.0], bounds=bounds, method="highs")
        if res.status == 0 and -res.fun >= -tol:
            keep.append(i)
    return keep


def _hull_vertices(x: np.ndarray) -> list[int]:
    """Indices of points that are vertices of ``conv(x + box)``, where each
    point is extended by far copies along every axis. Such vertices are
    exactly the points that uniquely minimize a nonnegative weighting."""
    n, d = x.shape
    span = x.max(axis=0) - x.min(axis=0)
    span[span == 0] = 1.0
    z = (x - x.min(axis=0)) / span
    far = 4.0
    pts = [z] + [z + far * np.eye(d)[j] for j in range(d)]
    hull = ConvexHull(np.vstack(pts))
    vertex_rows = {tuple(z[v]) for v in hull.vertices if v < n}
    # exact duplicates of a vertex share its status
    return [i for i in range(n) if tuple(z[i]) in vertex_rows]


def lower_convex_hull(points: Iterable[ObjectivePoint], tol: float = 1e-9) -> Frontier:
    """Non-dominated points that are supported by the lower convex hull in
    (latency, memory, -score) space.

    Only hull vertices are kept; points strictly inside a hull face are
    dropped. Sets of at most three points are returned whole.
    """
    nd = non_dominated(points).points
    if len(nd) <= 3:
        return Frontier(nd, FrontierMode.LOWER_CONVEX_HULL)
    x = _as_min_array(nd)
    try:
        keep = _hull_vertices(x)
    except QhullError:
        keep = _supported(x, tol)
    return Frontier(tuple(nd[i] for i in keep), FrontierMode.LOWER_CONVEX_HULL)


def extract_frontier(points: Iterable[ObjectivePoint], mode: FrontierMode | str = FrontierMode.NON_DOMINATED) -> Frontier:
    mode = FrontierMode.parse(mode)
    if mode is FrontierMode.LOWER_CONVEX_HULL:
        return lower_convex_hull(points)
    return non_dominated(points)


def d_avg(proxy: Sequence[tuple[float, float]], truth: Sequence[tuple[float, float]]) -> float:
    """Mean relative quality gap between two frontiers.

    Both arguments are (latency, perplexity) pairs. Each proxy point is
    matched to the truth point nearest in latency; ties go to the truth point
    with the lower perplexity. Identical frontiers score 0 only when their
    latencies are distinct, as on any (quality, latency) frontier.
    """
    if not proxy or not truth:
        raise EmptyFrontier("both frontiers must be nonempty")
    if any(p <= 0 for _, p in truth) or any(p <= 0 for _, p in proxy):
        raise ValueError("perplexities must be positive")
    total = 0.0
    for lat, ppl in proxy:
        _, _, gt = min((abs(t_lat - lat), t_ppl, t_ppl) for t_lat, t_ppl in truth)
        total += abs(ppl - gt) / gt
    return total / len(proxy)


def hypervolume(points: Iterable[ObjectivePoint], reference: Sequence[float]) -> float:
    """Volume dominated by ``points`` and bounded by ``reference``.

    ``reference`` is (score, latency_ms, peak_memory_bytes) and must be
    weakly dominated by every point. Computed by slicing along memory and
    summing 2-D areas.
    """
    pts = list(points)
    ref_score, ref_lat, ref_mem = (float(v) for v in reference)
    for p in pts:
        if p.score < ref_score or p.latency_ms > ref_lat or p.peak_memory_bytes > ref_mem:
            raise BadReference(f"reference {tuple(reference)} is not dominated by {p.objectives}")
    if not pts:
        return 0.0
    x = _as_min_array(pts)
    ref = np.array([-ref_score, ref_lat, ref_mem])
    order = np.argsort(x[:, 2], kind="mergesort")
    x = x[order]
    stairs = _Staircase()
    volume = 0.0
    for j in range(len(x)):
        stairs.insert(float(x[j, 0]), float(x[j, 1]))
        z_lo = x[j, 2]
        z_hi = x[j + 1, 2] if j + 1 < len(x) else ref[2]
        if z_hi > z_lo:
            volume += stairs.area(ref[0], ref[1]) * float(z_hi - z_lo)
    return volume
