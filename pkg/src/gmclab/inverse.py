"""Hitting-time inverse of a measure, its semigroup operator, and the
convergence-to-Lebesgue experiment.

Q(x) = inf{t >= 0 : eta[0, t] >= x}; with an origin T the semigroup form
Q_x . T = inf{t >= 0 : eta[T, T + t] >= x}.  All coordinates are relative
to the grid start, so Q(0) = 0.  In-cell inversion is linear in mass and
ties at cell boundaries resolve to the left endpoint (the inf convention).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MismatchedHierarchy, OutOfDomain, OutOfMass, PreconditionError
from .kernels import Grid
from .measure import (
    GmcMeasure,
    GmcParams,
    Normalization,
    mass,
    sample_measure_rows,
)
from .tables import ExperimentTable

__all__ = [
    "InverseMap",
    "invert",
    "invert_rows",
    "shifted_mass",
    "precompose",
    "lebesgue_deviation_experiment",
]


@dataclass
class InverseMap:
    """Read-only inverse view over an immutable measure."""

    measure: GmcMeasure

    @property
    def total_mass(self) -> float:
        return self.measure.total_mass

    @property
    def span(self) -> float:
        return self.measure.grid.span


def _invert_cumulative(cumulative: np.ndarray, h: float, target: float) -> float:
    """inf{t : F(t) >= target} on the piecewise-linear cumulative F with
    knots at multiples of h.  Assumes 0 <= target <= F(end)."""
    i = int(np.searchsorted(cumulative, target, side="left"))
    if i == 0:
        return 0.0
    if cumulative[i] == target:
        return i * h
    lo, hi = cumulative[i - 1], cumulative[i]
    return (i - 1 + (target - lo) / (hi - lo)) * h


def invert(inv: InverseMap, x: float, origin: float = 0.0) -> float:
    """Q_x . origin: first duration t with eta[origin, origin + t] >= x."""
    if x < 0:
        raise PreconditionError(f"mass argument must be nonnegative, got {x}")
    grid = inv.measure.grid
    if not (0.0 <= origin <= grid.span * (1 + 1e-12)):
        raise OutOfDomain(f"origin {origin} outside [0, {grid.span}]")
    cum = inv.measure.cumulative
    f_at_origin = float(np.interp(origin, np.arange(grid.n + 1) * grid.h, cum))
    remaining = float(cum[-1]) - f_at_origin
    if x > remaining:
        raise OutOfMass(
            f"requested mass {x} exceeds remaining {remaining} after T={origin}")
    target = min(f_at_origin + x, float(cum[-1]))
    t_abs = _invert_cumulative(cum, grid.h, target)
    if origin > 0.0:
        # re-anchor: inf over [origin, ...] only
        t_abs = max(t_abs, origin)
    return t_abs - origin


def invert_rows(cumulative_rows: np.ndarray, h: float, x: float) -> np.ndarray:
    """Batch Q(x) over cumulative rows; rows with total mass < x get +inf
    (the inf of an empty set)."""
    count = cumulative_rows.shape[0]
    out = np.empty(count)
    for i in range(count):
        cum = cumulative_rows[i]
        if x > cum[-1]:
            out[i] = np.inf
        else:
            out[i] = _invert_cumulative(cum, h, x)
    return out


def shifted_mass(inv: InverseMap, a: float, t: float) -> float:
    """eta[Q_a, Q_a + t], the shifted interval mass."""
    if t < 0:
        raise PreconditionError("t must be nonnegative")
    q_a = invert(inv, a)
    grid = inv.measure.grid
    if q_a + t > grid.span * (1 + 1e-12):
        raise OutOfDomain(f"Q({a}) + {t} = {q_a + t} leaves the grid")
    start = grid.start
    return mass(inv.measure, start + q_a, start + min(q_a + t, grid.span))


def precompose(coarse: GmcMeasure, fine_inv: InverseMap, x: float) -> float:
    """Mass of the coarse measure on [0, Q_fine(x)]: the precomposed value
    eta^k(Q^{k+m}(x)).  Both measures must come from one joint draw."""
    fine = fine_inv.measure
    if (coarse.grid != fine.grid or coarse.draw_id is None
            or coarse.draw_id != fine.draw_id):
        raise MismatchedHierarchy(
            "precompose needs measures from a single hierarchy draw on a "
            "shared grid")
    q = invert(fine_inv, x)
    start = coarse.grid.start
    return mass(coarse, start, start + q)


def lebesgue_deviation_experiment(deltas, interval: tuple[float, float],
                                  deviation_list, gamma: float, trials: int,
                                  seed: int, grid: Grid | None = None,
                                  base_stream: int = 40) -> ExperimentTable:
    """Empirical decay of P(eta^n(A) < |A| - D), P(eta^n(A) > |A| + D) and
    P(|Q^n(0, x) - x| > D) with x = |A|, as the field height delta_n shrinks.

    Uses MEAN_ONE normalization so eta^n tends to Lebesgue measure.  Rows
    where the sampled total mass cannot reach x are counted as deviations
    (Q = +inf by the inf convention).
    """
    deltas = [float(d) for d in deltas]
    a0, a1 = float(interval[0]), float(interval[1])
    if not 0.0 <= a0 < a1:
        raise PreconditionError("interval must satisfy 0 <= a0 < a1")
    x = a1 - a0
    if grid is None:
        span = a1 + x + 2.0
        h = min(deltas) / 8.0
        grid = Grid(0.0, h, int(math.ceil(span / h)))
    if a1 > grid.span:
        raise OutOfDomain("interval must sit inside the grid")

    params = GmcParams(gamma, Normalization.MEAN_ONE)
    bounds = grid.boundaries() - grid.start
    ia = float(np.interp(a0, bounds, np.arange(grid.n + 1)))
    ib = float(np.interp(a1, bounds, np.arange(grid.n + 1)))

    rows = []
    for n_idx, delta_n in enumerate(deltas, start=1):
        from .kernels import KernelFamily, KernelSpec

        spec = KernelSpec(KernelFamily.LINE_U, delta=delta_n, epsilon=grid.h)
        cum = sample_measure_rows(spec, grid, params, trials, seed,
                                  base_stream=base_stream + n_idx)

        def interp_col(pos):
            i0 = int(math.floor(pos))
            frac = pos - i0
            if i0 >= grid.n:
                return cum[:, grid.n]
            return cum[:, i0] * (1 - frac) + cum[:, i0 + 1] * frac

        eta_a = interp_col(ib) - interp_col(ia)
        q_x = invert_rows(cum, grid.h, x)
        for dev in deviation_list:
            dev = float(dev)
            p_lo = eta_a < x - dev
            p_hi = eta_a > x + dev
            p_inv = np.abs(q_x - x) > dev
            row = [float(n_idx), delta_n, dev]
            for ind in (p_lo, p_hi, p_inv):
                p = float(ind.mean())
                row.extend([p, math.sqrt(p * (1 - p) / trials)])
            rows.append(tuple(row))

    return ExperimentTable(
        columns=("n", "delta_n", "deviation", "p_lower", "p_lower_se",
                 "p_upper", "p_upper_se", "p_inverse", "p_inverse_se"),
        rows=rows,
        meta={"gamma": gamma, "trials": trials, "seed": seed,
              "interval": [a0, a1]},
    )
