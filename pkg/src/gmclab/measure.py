"""Discretized multiplicative-chaos measures and the Gaussian comparison harness.

A measure is built cell-by-cell from one field draw:

    cell_mass[i] = h * exp(gamma * U(x_i) - c_i)

with ``c_i = (gamma^2/2) ln(1/eps)`` under PAPER normalization (the measure
then has mean mass |I| * delta^{gamma^2/2} per unit interval) or
``c_i = (gamma^2/2) Var U(x_i)`` under MEAN_ONE (mean mass exactly |I|).
The epsilon -> 0 limit is replaced by grid refinement with eps tied to the
cell width.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ExponentOutOfRange, OutOfDomain, PrecheckFailed, PreconditionError
from .kernels import Grid, KernelFamily, KernelSpec, gram_matrix
from .sampler import sample_field_matrix

__all__ = [
    "Normalization",
    "GmcParams",
    "GmcMeasure",
    "zeta",
    "build_measure",
    "build_mass_rows",
    "sample_measure_rows",
    "hierarchy_measures",
    "mass",
    "FunctionalSpec",
    "ComparisonKind",
    "ComparisonReport",
    "comparison_check",
]


class Normalization(enum.Enum):
    PAPER = "PAPER"
    MEAN_ONE = "MEAN_ONE"


def zeta(q: float, gamma: float) -> float:
    """Multifractal exponent q - (gamma^2/2)(q^2 - q)."""
    return q - 0.5 * gamma * gamma * (q * q - q)


@dataclass(frozen=True)
class GmcParams:
    gamma: float
    normalization: Normalization = Normalization.MEAN_ONE

    def __post_init__(self):
        if not (0.0 <= self.gamma and self.gamma * self.gamma < 2.0):
            raise PreconditionError(
                f"gamma must satisfy 0 <= gamma < sqrt(2), got {self.gamma}")
        if not isinstance(self.normalization, Normalization):
            object.__setattr__(self, "normalization",
                               Normalization(self.normalization))

    @property
    def beta(self) -> float:
        return 0.5 * self.gamma * self.gamma

    def moment_cap(self) -> float:
        """Positive moments exist strictly below 2/gamma^2 (= 1/beta)."""
        return math.inf if self.gamma == 0.0 else 2.0 / (self.gamma * self.gamma)


@dataclass
class GmcMeasure:
    """Random measure on a grid: per-cell masses plus the cumulative array."""

    grid: Grid
    cell_mass: np.ndarray
    cumulative: np.ndarray  # length n+1, cumulative[0] = 0, nondecreasing
    params: GmcParams | None = None
    spec: KernelSpec | None = None
    seed: int | None = None
    draw_id: tuple | None = None  # identifies the joint draw for hierarchies

    @classmethod
    def from_cells(cls, grid: Grid, cell_mass: np.ndarray, **kw) -> "GmcMeasure":
        cell_mass = np.asarray(cell_mass, float)
        if cell_mass.shape != (grid.n,):
            raise PreconditionError("cell_mass must have one entry per cell")
        if np.any(cell_mass < 0) or not np.all(np.isfinite(cell_mass)):
            raise PreconditionError("cell masses must be finite and nonnegative")
        cumulative = np.concatenate(([0.0], np.cumsum(cell_mass)))
        return cls(grid=grid, cell_mass=cell_mass, cumulative=cumulative, **kw)

    @property
    def total_mass(self) -> float:
        return float(self.cumulative[-1])


def _normalizer(spec: KernelSpec, params: GmcParams) -> float:
    """The constant c subtracted from gamma * U in the exponent."""
    if params.normalization is Normalization.PAPER:
        if spec.epsilon <= 0.0:
            raise PreconditionError("PAPER normalization requires epsilon > 0")
        return params.beta * math.log(1.0 / spec.epsilon)
    return params.beta * spec.variance()


def build_mass_rows(spec: KernelSpec, grid: Grid, params: GmcParams,
                    values: np.ndarray) -> np.ndarray:
    """Vectorized cell masses for a (count, n) matrix of field draws."""
    c = _normalizer(spec, params)
    return grid.h * np.exp(params.gamma * values - c)


def sample_measure_rows(spec: KernelSpec, grid: Grid, params: GmcParams,
                        count: int, seed: int, base_stream: int = 0,
                        trial_offset: int = 0) -> np.ndarray:
    """(count, n+1) cumulative-mass rows for independent measure draws; the
    batch workhorse behind the Monte Carlo experiments."""
    values, _ = sample_field_matrix(spec, grid, count, seed, base_stream,
                                    trial_offset)
    masses = build_mass_rows(spec, grid, params, values)
    out = np.zeros((count, grid.n + 1))
    np.cumsum(masses, axis=1, out=out[:, 1:])
    return out


def build_measure(fieldsample, params: GmcParams) -> GmcMeasure:
    """Exponentiate one field draw into a measure."""
    spec, grid = fieldsample.spec, fieldsample.grid
    masses = build_mass_rows(spec, grid, params, fieldsample.values[None, :])[0]
    return GmcMeasure.from_cells(grid, masses, params=params, spec=spec,
                                 seed=fieldsample.seed,
                                 draw_id=(fieldsample.seed, fieldsample.index))


def hierarchy_measures(hier, params: GmcParams, trial: int) -> list[GmcMeasure]:
    """Measures eta^{delta_1}, ..., eta^{delta_N} of one joint hierarchy draw.

    All returned measures share a draw_id, which is what precomposition
    checks to refuse mixing independent draws.
    """
    out = []
    for k in range(1, len(hier.deltas) + 1):
        spec = hier.level_spec(k)
        masses = build_mass_rows(spec, hier.grid, params,
                                 hier.level_values(k)[trial][None, :])[0]
        out.append(GmcMeasure.from_cells(
            hier.grid, masses, params=params, spec=spec, seed=hier.seed,
            draw_id=(hier.seed, trial)))
    return out


def mass(measure: GmcMeasure, a: float, b: float) -> float:
    """eta[a, b] with linear interpolation inside boundary cells."""
    grid = measure.grid
    slack = 1e-9 * grid.h
    if not (grid.start - slack <= a <= b <= grid.end + slack):
        raise OutOfDomain(
            f"[{a}, {b}] outside the measure's domain "
            f"[{grid.start}, {grid.end}]")
    bounds = grid.boundaries()
    fa, fb = np.interp([a, b], bounds, measure.cumulative)
    return float(fb - fa)


def mass_rows(cumulative_rows: np.ndarray, grid: Grid, a: float, b: float) -> np.ndarray:
    """Batch version of :func:`mass` over cumulative rows."""
    bounds = grid.boundaries()
    ia = np.interp(a, bounds, np.arange(grid.n + 1))
    ib = np.interp(b, bounds, np.arange(grid.n + 1))

    def at(pos):
        i0 = int(math.floor(pos))
        frac = pos - i0
        if i0 >= grid.n:
            return cumulative_rows[:, grid.n]
        return cumulative_rows[:, i0] * (1 - frac) + cumulative_rows[:, i0 + 1] * frac

    return at(ib) - at(ia)


def require_gmc_exponent(q: float, params: GmcParams):
    """Reject GMC-moment requests at or above the 2/gamma^2 threshold."""
    if q >= params.moment_cap():
        raise ExponentOutOfRange(
            f"moment exponent {q} outside (-inf, 2/gamma^2) = "
            f"(-inf, {params.moment_cap()})")


# -- comparison-inequality harness ----------------------------------------------

class ComparisonKind(enum.Enum):
    KAHANE = "KAHANE"
    SLEPIAN = "SLEPIAN"
    FKG = "FKG"


@dataclass(frozen=True)
class FunctionalSpec:
    """Entry of the closed functional catalogue.

    power:            F(W) = W^p applied to the unit-weight chaos
                      W = sum_i h exp(X_i - Var_i/2); convex for p >= 1 or p < 0
    sup:              max_i X_i (increasing)
    sup_indicator:    1{max_i X_i <= tau} (decreasing)
    coordinate_sum:   sum_i X_i (increasing)
    product_sigmoid:  prod_i 1/(1 + e^{-X_i}) (bounded, increasing)
    """

    name: str
    p: float | None = None
    tau: float | None = None

    _MONOTONE = {"sup": +1, "sup_indicator": -1, "coordinate_sum": +1,
                 "product_sigmoid": +1}

    def __post_init__(self):
        if self.name not in ("power", "sup", "sup_indicator", "coordinate_sum",
                             "product_sigmoid"):
            raise PreconditionError(f"unknown functional {self.name!r}")
        if self.name == "power" and self.p is None:
            raise PreconditionError("power functional needs an exponent p")
        if self.name == "sup_indicator" and self.tau is None:
            raise PreconditionError("sup_indicator needs a threshold tau")

    @property
    def monotone(self) -> int:
        """+1 increasing, -1 decreasing, 0 neither (as a field functional)."""
        return self._MONOTONE.get(self.name, 0)

    @property
    def convex_in_mass(self) -> bool:
        return self.name == "power" and (self.p >= 1.0 or self.p < 0.0)

    def apply(self, values: np.ndarray, grid: Grid, variance: float) -> np.ndarray:
        if self.name == "power":
            w = grid.h * np.exp(values - 0.5 * variance)
            return w.sum(axis=1) ** self.p
        if self.name == "sup":
            return values.max(axis=1)
        if self.name == "sup_indicator":
            return (values.max(axis=1) <= self.tau).astype(float)
        if self.name == "coordinate_sum":
            return values.sum(axis=1)
        return 1.0 / (1.0 + np.exp(-values)).prod(axis=1)

    def label(self) -> str:
        if self.name == "power":
            return f"power(p={self.p:g})"
        if self.name == "sup_indicator":
            return f"sup_indicator(tau={self.tau:g})"
        return self.name


@dataclass
class ComparisonReport:
    kind: ComparisonKind
    functional: str
    lhs: float
    rhs: float
    lhs_se: float
    rhs_se: float
    combined_se: float
    verdict: str
    trials: int

    @property
    def holds(self) -> bool:
        return self.verdict == "HOLDS"


def _mean_se(samples: np.ndarray) -> tuple[float, float]:
    n = samples.size
    return float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(n))


def comparison_check(kind: ComparisonKind, spec_x: KernelSpec,
                     spec_y: KernelSpec | None, functional: FunctionalSpec,
                     grid: Grid, trials: int, seed: int,
                     functional_g: FunctionalSpec | None = None) -> ComparisonReport:
    """Monte Carlo test of one comparison inequality.

    KAHANE:  cov_X <= cov_Y entrywise, F convex in the chaos mass;
             checks E F(W_X) <= E F(W_Y).
    SLEPIAN: equal diagonals and cov_X <= cov_Y; F = sup_indicator(tau);
             checks P(max X <= tau) <= P(max Y <= tau).
    FKG:     single field with cov >= 0 entrywise; f, g monotone from the
             catalogue; checks E[f g] >= E[f] E[g] for equal monotonicity
             (reversed for opposite monotonicity).

    The verdict is HOLDS when the ordering is correct or violated by less
    than 3 combined standard errors.
    """
    if trials < 2:
        raise PreconditionError("need at least 2 trials")
    cov_x = gram_matrix(spec_x, grid).matrix
    tol = 1e-12 * max(1.0, float(np.abs(cov_x).max()))

    if kind in (ComparisonKind.KAHANE, ComparisonKind.SLEPIAN):
        if spec_y is None:
            raise PreconditionError(f"{kind.value} needs two kernel specs")
        cov_y = gram_matrix(spec_y, grid).matrix
        if np.any(cov_x > cov_y + tol):
            raise PrecheckFailed("cov_X <= cov_Y fails entrywise")
        if kind is ComparisonKind.SLEPIAN:
            if np.any(np.abs(np.diag(cov_x) - np.diag(cov_y)) > 1e-9):
                raise PrecheckFailed("Slepian requires equal diagonals")
            if functional.name != "sup_indicator":
                raise PrecheckFailed("Slepian harness uses sup_indicator")
        elif not functional.convex_in_mass:
            raise PrecheckFailed(
                "Kahane harness needs a convex mass functional (power with "
                "p >= 1 or p < 0)")

        xs, _ = sample_field_matrix(spec_x, grid, trials, seed, base_stream=11)
        ys, _ = sample_field_matrix(spec_y, grid, trials, seed, base_stream=12)
        fx = functional.apply(xs, grid, spec_x.variance())
        fy = functional.apply(ys, grid, spec_y.variance())
        lhs, lhs_se = _mean_se(fx)
        rhs, rhs_se = _mean_se(fy)
        comb = math.hypot(lhs_se, rhs_se)
        verdict = "HOLDS" if lhs <= rhs + 3.0 * comb else "VIOLATED"
        return ComparisonReport(kind, functional.label(), lhs, rhs, lhs_se,
                                rhs_se, comb, verdict, trials)

    # FKG
    if spec_y is not None:
        raise PreconditionError("FKG uses a single kernel spec")
    if np.any(cov_x < -tol):
        raise PrecheckFailed("FKG requires cov >= 0 entrywise")
    g = functional_g or functional
    if functional.monotone == 0 or g.monotone == 0:
        raise PrecheckFailed("FKG needs monotone functionals from the catalogue")
    direction = functional.monotone * g.monotone  # +1 same, -1 opposite

    xs, _ = sample_field_matrix(spec_x, grid, trials, seed, base_stream=13)
    var = spec_x.variance()
    f_vals = functional.apply(xs, grid, var)
    g_vals = g.apply(xs, grid, var)
    prod = f_vals * g_vals
    lhs, lhs_se = _mean_se(prod)
    ef, se_f = _mean_se(f_vals)
    eg, se_g = _mean_se(g_vals)
    cov_fg = float(np.cov(f_vals, g_vals)[0, 1]) / trials
    rhs = ef * eg
    rhs_se = math.sqrt(max((eg * se_f) ** 2 + (ef * se_g) ** 2
                           + 2.0 * ef * eg * cov_fg, 0.0))
    comb = math.hypot(lhs_se, rhs_se)
    ok = (lhs >= rhs - 3.0 * comb) if direction > 0 else (lhs <= rhs + 3.0 * comb)
    return ComparisonReport(ComparisonKind.FKG,
                            f"{functional.label()},{g.label()}", lhs, rhs,
                            lhs_se, rhs_se, comb,
                            "HOLDS" if ok else "VIOLATED", trials)
