"""Rank-quality and language-model metrics."""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Hashable, Sequence

import numpy as np


class LengthMismatch(ValueError):
    pass


class DegenerateSeries(ValueError):
    """A constant series has no rank correlation."""


class IdMismatch(ValueError):
    pass


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="mergesort")
    sorted_x = x[order]
    ranks = np.empty(len(x), dtype=float)
    # boundaries of runs of equal values in sorted order
    starts = np.flatnonzero(np.r_[True, sorted_x[1:] != sorted_x[:-1]])
    ends = np.r_[starts[1:], len(x)]
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = (s + 1 + e) / 2.0
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation, tie-corrected (Pearson on average ranks)."""
    if len(x) != len(y):
        raise LengthMismatch(f"series lengths differ: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise LengthMismatch("need at least two observations")
    rx, ry = average_ranks(x), average_ranks(y)
    dx, dy = rx - rx.mean(), ry - ry.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateSeries("spearman is undefined for a constant series")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def top_count(top_percent: float, n: int) -> int:
    """``ceil(top_percent / 100 * n)`` without float round-up artefacts."""
    if not 0 < top_percent <= 100:
        raise ValueError(f"top_percent must be in (0, 100], got {top_percent}")
    return max(1, math.ceil(Fraction(str(top_percent)) * n / 100))


def common_ratio(
    truth: Sequence[tuple[Hashable, float]],
    proxy: Sequence[tuple[Hashable, float]],
    top_percent: float,
) -> float:
    """Overlap fraction of the top-k% sets under both rankings.

    ``truth`` holds (id, quality) with lower quality better (perplexity);
    ``proxy`` holds (id, score) with higher better. Ties are broken by the
    order ids appear in ``truth``.
    """
    order = {i: pos for pos, (i, _) in enumerate(truth)}
    if len(order) != len(truth):
        raise IdMismatch("duplicate ids in truth")
    proxy_ids = [i for i, _ in proxy]
    if len(set(proxy_ids)) != len(proxy_ids) or set(proxy_ids) != set(order):
        raise IdMismatch("truth and proxy must cover the same ids exactly once")
    m = top_count(top_percent, len(truth))
    top_truth = sorted(truth, key=lambda t: (t[1], order[t[0]]))[:m]
    top_proxy = sorted(proxy, key=lambda t: (-t[1], order[t[0]]))[:m]
    common = {i for i, _ in top_truth} & {i for i, _ in top_proxy}
    return len(common) / m


def perplexity(cross_entropy_bits: float) -> float:
    """Perplexity from cross-entropy measured in bits."""
    if not math.isfinite(cross_entropy_bits):
        raise ValueError("cross entropy must be finite")
    return 2.0**cross_entropy_bits
