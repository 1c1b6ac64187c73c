"""Closeness and imbalance diagnostics: KS distances, (alpha, beta) reports, histograms."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import Sample, ValidationError
from .density import BetaTarget, KdeTarget, NormalTarget, TargetDensity
from .resampling import DrawWeights

__all__ = [
    "Ecdf",
    "ks_distance",
    "target_grid",
    "ks_to_target",
    "adaptive_simpson",
    "interval_mass",
    "equal_mass_partition",
    "ImbalanceReport",
    "imbalance_report",
    "histogram",
]

_MASS_TOL = 1e-9


class Ecdf:
    """Right-continuous (optionally weighted) empirical CDF of one coordinate."""

    def __init__(self, values, weights=None):
        values = np.asarray(values, dtype=float).reshape(-1)
        if weights is None:
            q = np.full(values.size, 1.0 / max(values.size, 1))
        else:
            q = weights.q if isinstance(weights, DrawWeights) else np.asarray(weights, dtype=float)
        order = np.argsort(values, kind="stable")
        self.sorted = values[order]
        if weights is None:
            # exact k/n levels, not a running sum of 1/n
            self._cum = np.arange(values.size + 1) / max(values.size, 1)
        else:
            self._cum = np.concatenate([[0.0], np.cumsum(q[order])])
        self.jumps = np.unique(self.sorted)

    def __call__(self, t):
        pos = np.searchsorted(self.sorted, np.asarray(t, dtype=float), side="right")
        return np.where(pos == self.sorted.size, 1.0, self._cum[pos])

    def left_limit(self, t):
        """``F(t-)``: mass strictly below ``t``."""
        pos = np.searchsorted(self.sorted, np.asarray(t, dtype=float), side="left")
        return np.where(pos == self.sorted.size, 1.0, self._cum[pos])


def _as_cdf(obj):
    if isinstance(obj, Ecdf) or callable(obj):
        return obj
    if isinstance(obj, Sample):
        return Ecdf(obj.x[:, 0])
    return Ecdf(obj)


def ks_distance(cdf_a, cdf_b, eval_points: Sequence[float] | None = None) -> float:
    """``max |F_a - F_b|`` over ``eval_points`` and every jump of an empirical argument.

    Arguments may be :class:`Ecdf` objects, raw samples (turned into ECDFs) or
    callables. At ECDF jumps the left limits are checked as well, so for two
    ECDFs, or an ECDF against a continuous CDF, the value is the exact KS
    statistic.
    """
    fa, fb = _as_cdf(cdf_a), _as_cdf(cdf_b)
    pts = [np.asarray(eval_points, dtype=float).reshape(-1)] if eval_points is not None else []
    jumps = [f.jumps for f in (fa, fb) if isinstance(f, Ecdf)]
    pts = np.unique(np.concatenate(pts + jumps)) if pts or jumps else np.empty(0)
    if pts.size == 0:
        raise ValidationError("no evaluation points")
    gap = np.abs(np.asarray(fa(pts), dtype=float) - np.asarray(fb(pts), dtype=float))
    best = float(gap.max())
    if jumps:
        J = np.unique(np.concatenate(jumps))
        la = fa.left_limit(J) if isinstance(fa, Ecdf) else fa(J)
        lb = fb.left_limit(J) if isinstance(fb, Ecdf) else fb(J)
        best = max(best, float(np.abs(np.asarray(la) - np.asarray(lb)).max()))
    return best


def target_grid(target: TargetDensity, size: int = 2001) -> np.ndarray:
    if isinstance(target, BetaTarget):
        return np.linspace(0.0, 1.0, size)
    if isinstance(target, NormalTarget):
        return np.linspace(target.mu - 6 * target.sigma, target.mu + 6 * target.sigma, size)
    if isinstance(target, KdeTarget):
        pts = target.model.points[:, 0]
        h = math.sqrt((target.model.H @ target.model.H.T)[0, 0])
        return np.linspace(pts.min() - 6 * h, pts.max() + 6 * h, size)
    lo, hi = target.ppf(np.array([1e-9, 1 - 1e-9]))
    return np.linspace(lo, hi, size)


def ks_to_target(values, target: TargetDensity, weights=None, grid_size: int = 2001) -> float:
    """KS distance between a sample's first coordinate and the target marginal CDF."""
    if isinstance(values, Sample):
        values = values.x[:, 0]
    return ks_distance(Ecdf(values, weights), target.cdf, target_grid(target, grid_size))


def adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float = 1e-8,
                     max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature of a scalar function on ``[a, b]``."""
    if b <= a:
        return 0.0

    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return recurse(a, m, fa, flm, fm, left, tol / 2, depth - 1) + recurse(
            m, b, fm, frm, fb, right, tol / 2, depth - 1
        )

    # a few fixed panels keep narrow peaks from slipping between the first nodes
    edges = np.linspace(a, b, 9)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        fa, fb, fm = f(lo), f(hi), f(0.5 * (lo + hi))
        total += recurse(lo, hi, fa, fm, fb, simpson(fa, fm, fb, lo, hi), tol / 8, max_depth)
    return total


def _finite_bounds(target: TargetDensity, lo: float, hi: float) -> tuple[float, float]:
    s_lo, s_hi = target.support
    if isinstance(target, KdeTarget):
        pts = target.model.points[:, 0]
        h = math.sqrt((target.model.H @ target.model.H.T)[0, 0])
        s_lo, s_hi = pts.min() - 10 * h, pts.max() + 10 * h
    elif isinstance(target, NormalTarget):
        s_lo, s_hi = target.mu - 40 * target.sigma, target.mu + 40 * target.sigma
    return max(lo, s_lo), min(hi, s_hi)


def interval_mass(target: TargetDensity, lo: float, hi: float, tol: float = 1e-8) -> float:
    """Target mass of ``[lo, hi]`` (first coordinate) by adaptive Simpson quadrature.

    KDE targets use the mixture CDF instead: the trimmed density integrates to
    more than one, which would let the bin masses sum past 1.
    """
    if isinstance(target, KdeTarget):
        return float(max(target.cdf(hi) - target.cdf(lo), 0.0))
    a, b = _finite_bounds(target, lo, hi)
    if b <= a:
        return 0.0

    def f(t):
        v = float(np.asarray(target.pdf(np.array([t]))).reshape(-1)[0])
        return v if math.isfinite(v) else 0.0

    return min(max(adaptive_simpson(f, a, b, tol), 0.0), 1.0)


def equal_mass_partition(target: TargetDensity, bins: int = 20) -> list[tuple[float, float]]:
    """``bins`` consecutive intervals each carrying target mass ``1 / bins``."""
    if bins < 1:
        raise ValidationError("bins must be at least 1")
    edges = np.asarray(target.ppf(np.linspace(0.0, 1.0, bins + 1)), dtype=float)
    lo, hi = target.support
    edges[0] = max(edges[0], lo) if math.isfinite(lo) else edges[0]
    edges[-1] = min(edges[-1], hi) if math.isfinite(hi) else edges[-1]
    return [(float(a), float(b)) for a, b in zip(edges[:-1], edges[1:])]


@dataclass
class ImbalanceReport:
    """Per-bin empirical vs target mass and the partition-restricted verdict."""

    partition: list[tuple[float, float]]
    p_hat: list[float]
    p0: list[float]
    deviation: list[float | None]
    alpha: float
    beta: float
    verdict: bool
    worst_set: list[int]
    worst_deviation: float
    worst_mass: float
    off_support: list[int] = field(default_factory=list)
    note: str = (
        "verdict restricted to unions of partition bins; arbitrary sets may show larger imbalance"
    )

    def verdict_for(self, alpha: float, beta: float) -> bool:
        return _search(self.p_hat, self.p0, self.off_support, alpha, beta)[0]

    def to_dict(self) -> dict:
        # JSON has no infinities; unbounded partition edges become strings
        def num(v):
            if v is None:
                return None
            v = float(v)
            return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")

        return {
            "partition": [[num(a), num(b)] for a, b in self.partition],
            "p_hat": [num(v) for v in self.p_hat],
            "p0": [num(v) for v in self.p0],
            "deviation": [num(v) for v in self.deviation],
            "alpha": float(self.alpha),
            "beta": float(self.beta),
            "verdict": bool(self.verdict),
            "worst_set": [[num(self.partition[i][0]), num(self.partition[i][1])] for i in self.worst_set],
            "worst_set_bins": [int(i) for i in self.worst_set],
            "worst_deviation": num(self.worst_deviation),
            "worst_mass": num(self.worst_mass),
            "off_target_support": [int(i) for i in self.off_support],
            "note": self.note,
        }


def _search(p_hat, p0, off, alpha, beta):
    """Greedy search over unions of bins ordered by their empirical/target ratio.

    Under- and over-represented directions are scanned separately; every
    prefix (most extreme bins first) with mass >= beta is a candidate.
    """
    usable = [i for i in range(len(p0)) if i not in off and p0[i] > 0]
    ratio = {i: p_hat[i] / p0[i] for i in usable}
    best = (False, [], -1.0, 0.0)
    for order in (
        sorted(usable, key=lambda i: (ratio[i], i)),
        sorted(usable, key=lambda i: (-ratio[i], i)),
    ):
        mass_hat = mass0 = 0.0
        chosen = []
        for i in order:
            chosen.append(i)
            mass_hat += p_hat[i]
            mass0 += p0[i]
            if mass0 < beta - _MASS_TOL:
                continue
            dev = abs(mass_hat / mass0 - 1.0)
            if dev > best[2]:
                best = (dev > alpha, sorted(chosen), dev, mass0)
    return best


def _membership(col: np.ndarray, partition) -> np.ndarray:
    top = max(b for _, b in partition)
    out = np.full(col.size, -1)
    for k, (a, b) in enumerate(partition):
        inside = (col >= a) & ((col < b) | ((b == top) & (col == b)))
        out[inside & (out < 0)] = k
    return out


def imbalance_report(
    sample,
    target: TargetDensity,
    partition: Sequence[tuple[float, float]] | None = None,
    alpha: float = 0.5,
    beta: float = 0.05,
    coordinate: int = 0,
    bins: int = 20,
) -> ImbalanceReport:
    """Check whether some union of bins with target mass >= beta deviates by more than alpha.

    The default partition is ``bins`` equal-mass intervals under the target.
    Intervals are half-open ``[a, b)``; the one with the largest upper edge is
    closed. Bins with zero target mass but observed points are reported as
    off-target-support and left out of the ratio search.
    """
    col = sample.x[:, coordinate] if isinstance(sample, Sample) else np.asarray(sample, dtype=float).reshape(-1)
    if partition is None:
        partition = equal_mass_partition(target, bins)
    partition = [(float(a), float(b)) for a, b in partition]
    ordered = sorted(partition)
    for (a1, b1), (a2, b2) in zip(ordered[:-1], ordered[1:]):
        if a2 < b1:
            raise ValidationError("partition intervals overlap")
    n = col.size
    member = _membership(col, partition)
    p_hat = [float((member == k).sum()) / n if n else 0.0 for k in range(len(partition))]
    p0 = [interval_mass(target, a, b) for a, b in partition]
    off = [k for k in range(len(partition)) if p0[k] <= 1e-15 and p_hat[k] > 0]
    deviation = [
        None if (k in off or p0[k] <= 1e-15) else abs(p_hat[k] / p0[k] - 1.0)
        for k in range(len(partition))
    ]
    verdict, worst, dev, mass = _search(p_hat, p0, off, alpha, beta)
    return ImbalanceReport(partition, p_hat, p0, deviation, alpha, beta, verdict, worst, dev, mass, off)


def histogram(sample, coordinate: int = 0, bins: int = 10, range: tuple[float, float] | None = None):
    """Equal-width bin counts and edges; the right edge belongs to the last bin."""
    if bins < 1:
        raise ValidationError("bins must be at least 1")
    col = sample.x[:, coordinate] if isinstance(sample, Sample) else np.asarray(sample, dtype=float).reshape(-1)
    if range is None and col.size:
        range = (float(col.min()), float(col.max()))
    counts, edges = np.histogram(col, bins=bins, range=range)
    return counts, edges
