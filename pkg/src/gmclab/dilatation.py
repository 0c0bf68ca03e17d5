"""Dyadic Whitney-square bound on the dilatation of the inverse map.

For a depth-n dyadic interval I the Whitney square is C_I = I x
[2^{-n-1}, 2^{-n}] and the distortion over it is bounded by

    sum over unordered pairs {J1, J2} of depth-(n+5) dyadic intervals
    inside j0(I) of  Q(J1)/Q(J2) + Q(J2)/Q(J1),

where j0(I) is I together with its neighbors in D_n, clipped at the ends of
[0, 1] (the integral lives on the real line, not the circle).  Each summand
is x + 1/x >= 2 and the whole bound is invariant under rescaling the
measure, so the identity map gives exactly (#subintervals)(#subintervals-1)
per square.  The depth offset 5 comes from the proof display and stays
configurable for sensitivity studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainExceeded, PreconditionError
from .inverse import InverseMap
from .tables import ExperimentTable, batch_means_stderr

__all__ = [
    "DEPTH_OFFSET",
    "WhitneyIndex",
    "whitney_ratio_bound",
    "DilatationResult",
    "dilatation_integral",
]

DEPTH_OFFSET = 5


@dataclass(frozen=True)
class WhitneyIndex:
    """Depth-n dyadic interval I = [(k-1) 2^-n, k 2^-n], 1 <= k <= 2^n."""

    n: int
    k: int

    def __post_init__(self):
        if self.n < 0:
            raise PreconditionError("depth must be nonnegative")
        if not (1 <= self.k <= 2 ** self.n):
            raise PreconditionError(
                f"dyadic index {self.k} outside [1, 2^{self.n}]")

    @property
    def interval(self) -> tuple[float, float]:
        w = 2.0 ** (-self.n)
        return ((self.k - 1) * w, self.k * w)

    @property
    def square(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return (self.interval, (2.0 ** (-self.n - 1), 2.0 ** (-self.n)))

    @property
    def area(self) -> float:
        return 2.0 ** (-2 * self.n - 1)

    def neighborhood_subrange(self, offset: int = DEPTH_OFFSET) -> tuple[int, int]:
        """0-based [lo, hi) range of depth-(n+offset) subinterval indices
        covering j0(I) = I with its neighbors, clipped to [0, 1]."""
        per = 2 ** offset
        lo = max(self.k - 2, 0) * per
        hi = min(self.k + 1, 2 ** self.n) * per
        return lo, hi


def _inverse_increments(inv: InverseMap, depth: int) -> np.ndarray:
    """Q increments over all 2**depth dyadic mass intervals of [0, 1]."""
    if inv.total_mass < 1.0:
        raise DomainExceeded(
            f"inverse covers mass [0, {inv.total_mass}]; the Whitney bound "
            "needs Q on all of [0, 1]")
    cum = inv.measure.cumulative
    h = inv.measure.grid.h
    targets = np.linspace(0.0, 1.0, 2 ** depth + 1)
    idx = np.searchsorted(cum, targets, side="left")
    lo = cum[np.maximum(idx - 1, 0)]
    hi = cum[idx]
    denom = np.where(hi > lo, hi - lo, 1.0)
    t = (idx - 1 + (targets - lo) / denom) * h
    t = np.where(cum[idx] == targets, idx * h, t)
    t = np.where(idx == 0, 0.0, t)
    return np.diff(t)


def _pair_sum(v: np.ndarray) -> float:
    """sum over unordered pairs i < j of v_i/v_j + v_j/v_i, via the identity
    sum_{i != j} v_i / v_j = (sum v)(sum 1/v) - count."""
    s1 = float(v.sum())
    s2 = float((1.0 / v).sum())
    return s1 * s2 - v.size


def whitney_ratio_bound(inv: InverseMap, idx: WhitneyIndex,
                        offset: int = DEPTH_OFFSET) -> float:
    """The displayed distortion bound over one Whitney square; always >= 2
    once at least one pair exists."""
    incs = _inverse_increments(inv, idx.n + offset)
    lo, hi = idx.neighborhood_subrange(offset)
    return _pair_sum(incs[lo:hi])


@dataclass
class DilatationResult:
    max_depth: int
    partial_sums: list[float]     # running estimate after each depth
    layer_sums: list[float]       # contribution of each depth layer
    estimate: float

    def table(self) -> ExperimentTable:
        rows = [(float(n + 1), self.layer_sums[n], self.partial_sums[n])
                for n in range(self.max_depth)]
        return ExperimentTable(columns=("depth", "layer_sum", "partial_sum"),
                               rows=rows)


def dilatation_integral(inv: InverseMap, max_depth: int,
                        offset: int = DEPTH_OFFSET) -> DilatationResult:
    """Partial sums over depths 1..max_depth of area(C_I) times the Whitney
    ratio bound, in deterministic depth-major, index-minor order."""
    if max_depth < 1:
        raise PreconditionError("max_depth must be at least 1")
    partial = []
    layers = []
    total = 0.0
    for n in range(1, max_depth + 1):
        incs = _inverse_increments(inv, n + offset)
        pv = np.concatenate(([0.0], np.cumsum(incs)))
        pr = np.concatenate(([0.0], np.cumsum(1.0 / incs)))
        per = 2 ** offset
        area = 2.0 ** (-2 * n - 1)
        layer = 0.0
        for k in range(1, 2 ** n + 1):
            lo = max(k - 2, 0) * per
            hi = min(k + 1, 2 ** n) * per
            s1 = pv[hi] - pv[lo]
            s2 = pr[hi] - pr[lo]
            layer += area * (s1 * s2 - (hi - lo))
        total += layer
        layers.append(layer)
        partial.append(total)
    return DilatationResult(max_depth=max_depth, partial_sums=partial,
                            layer_sums=layers, estimate=total)
