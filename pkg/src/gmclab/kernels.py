"""Closed-form covariance kernels of the truncated log-correlated fields.

All kernels are radial: ``covariance(spec, d)`` depends on the distance
``d = |x1 - x2|`` only.  The families are

``LINE_U``
    white noise on the truncated triangle ``S_eps^delta`` (heights in
    ``(eps, delta]``, hyperbolic area ``dx dy / y^2``):

        ln(delta/eps) - (1/eps - 1/delta) d          for d <= eps
        ln(delta/d) + d/delta - 1                    for eps <= d <= delta
        0                                            for d >= delta

``CONE_OMEGA``
    white noise on the truncated infinite cone ``A_eps^delta``:

        ln(delta/eps) + 1 - d/eps                    for d <= eps
        ln(delta/d)                                  for eps <= d <= delta
        0                                            for d >= delta

``CIRCLE_H``
    trace field on the unit circle, distances reduced mod 1 to [0, 1/2].
    The printed display has three rows but only two selector conditions;
    we evaluate row 2 at d = 0 (the variance) and row 1 for
    d > (2/pi) arctan(pi eps / 2), and refuse the unclaimed region in
    between (:class:`~gmclab.errors.AmbiguousBranch`).

``SCALED_U``
    the lambda-rescaled triangle field; supported on [0, delta/lambda] and
    negative past delta, where the associated measure no longer exists.
    Queries in [delta, delta/lambda) return the printed (possibly negative)
    value and emit :class:`NegativeCovarianceWarning`.

``PERTURBED_G``
    ``LINE_U`` plus a tabulated continuous bump ``g`` vanishing past delta.

``area_oracle`` recomputes LINE_U / CONE_OMEGA geometrically, by adaptive
Simpson integration of the horizontal cross-section width over ``1/y^2``;
it shares no code with the closed forms above and is the independent check
used by the kernel acceptance gate.
"""

from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AmbiguousBranch,
    NotPositiveSemidefinite,
    PreconditionError,
    QuadratureFailure,
    SpanTooLarge,
)

__all__ = [
    "KernelFamily",
    "KernelSpec",
    "Grid",
    "CovMatrix",
    "NegativeCovarianceWarning",
    "covariance",
    "covariance_values",
    "area_oracle",
    "gram_matrix",
    "read_g_table",
]


class NegativeCovarianceWarning(UserWarning):
    """SCALED_U evaluated where its covariance turns negative."""


class KernelFamily(enum.Enum):
    LINE_U = "LINE_U"
    CONE_OMEGA = "CONE_OMEGA"
    CIRCLE_H = "CIRCLE_H"
    SCALED_U = "SCALED_U"
    PERTURBED_G = "PERTURBED_G"


@dataclass(frozen=True)
class KernelSpec:
    """Immutable description of one covariance kernel.

    delta is the upper truncation height, epsilon the lower one
    (0 <= epsilon <= delta).  lam only matters for SCALED_U, the g table
    only for PERTURBED_G, and periodic is true only for CIRCLE_H.
    """

    family: KernelFamily
    delta: float
    epsilon: float = 0.0
    lam: float = 1.0
    g_x: tuple[float, ...] = field(default=())
    g_y: tuple[float, ...] = field(default=())
    periodic: bool = False

    def __post_init__(self):
        if not isinstance(self.family, KernelFamily):
            object.__setattr__(self, "family", KernelFamily(self.family))
        if not (self.delta > 0.0 and math.isfinite(self.delta)):
            raise PreconditionError(f"delta must be positive, got {self.delta}")
        if not (0.0 <= self.epsilon <= self.delta):
            raise PreconditionError(
                f"epsilon must lie in [0, delta], got {self.epsilon}")
        if not (0.0 < self.lam <= 1.0):
            raise PreconditionError(f"lambda must lie in (0, 1], got {self.lam}")
        if self.periodic and self.family is not KernelFamily.CIRCLE_H:
            raise PreconditionError("periodic=True is reserved for CIRCLE_H")
        if self.family is KernelFamily.CIRCLE_H:
            object.__setattr__(self, "periodic", True)
            if self.epsilon <= 0.0:
                raise PreconditionError("CIRCLE_H requires epsilon > 0")
        if self.family is KernelFamily.PERTURBED_G:
            self._validate_g_table()
        elif self.g_x or self.g_y:
            raise PreconditionError("g table is only meaningful for PERTURBED_G")

    def _validate_g_table(self):
        xs, ys = np.asarray(self.g_x, float), np.asarray(self.g_y, float)
        if xs.size == 0 or xs.size != ys.size:
            raise PreconditionError("PERTURBED_G needs a nonempty (x, g) table")
        if np.any(np.diff(xs) <= 0):
            raise PreconditionError("g table abscissae must be strictly increasing")
        if xs[0] < 0 or xs[-1] > self.delta:
            raise PreconditionError("g table must live on [0, delta]")
        if np.any(ys < 0):
            raise PreconditionError("g must be nonnegative")
        if math.isclose(xs[-1], self.delta) and ys[-1] != 0.0:
            raise PreconditionError("g(delta) must be 0")

    @property
    def m_g(self) -> float:
        """Recorded bound M_g: the maximum of the g table (0 if absent)."""
        return float(max(self.g_y)) if self.g_y else 0.0

    @property
    def support(self) -> float:
        """Distance past which the covariance vanishes identically."""
        if self.family is KernelFamily.SCALED_U:
            return self.delta / self.lam
        if self.family is KernelFamily.CIRCLE_H:
            return 0.5  # never vanishes; circle distances cap at 1/2
        return self.delta

    def g_at(self, d):
        """Linear interpolation of the g table, 0 past delta."""
        xs = np.asarray(self.g_x, float)
        ys = np.asarray(self.g_y, float)
        if not math.isclose(xs[-1], self.delta):
            xs = np.append(xs, self.delta)
            ys = np.append(ys, 0.0)
        out = np.interp(d, xs, ys, left=ys[0], right=0.0)
        return np.where(np.asarray(d) >= self.delta, 0.0, out)

    def variance(self) -> float:
        """Pointwise variance, covariance at distance 0."""
        return covariance(self, 0.0)

    def to_dict(self) -> dict:
        out = {
            "family": self.family.value,
            "delta": self.delta,
            "epsilon": self.epsilon,
        }
        if self.family is KernelFamily.SCALED_U:
            out["lam"] = self.lam
        if self.family is KernelFamily.PERTURBED_G:
            out["g_x"] = list(self.g_x)
            out["g_y"] = list(self.g_y)
        if self.periodic:
            out["periodic"] = True
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "KernelSpec":
        kw = dict(data)
        kw["family"] = KernelFamily(kw["family"])
        if "g_x" in kw:
            kw["g_x"] = tuple(kw["g_x"])
            kw["g_y"] = tuple(kw["g_y"])
        return cls(**kw)


@dataclass(frozen=True)
class Grid:
    """Uniform cell grid; cell i covers [start + i h, start + (i+1) h] with
    center start + (i + 1/2) h."""

    start: float
    h: float
    n: int

    def __post_init__(self):
        if not (self.h > 0.0 and math.isfinite(self.h)):
            raise PreconditionError(f"grid spacing must be positive, got {self.h}")
        if self.n < 1:
            raise PreconditionError(f"grid needs at least one cell, got {self.n}")

    @property
    def span(self) -> float:
        return self.n * self.h

    @property
    def end(self) -> float:
        return self.start + self.n * self.h

    def centers(self) -> np.ndarray:
        return self.start + (np.arange(self.n) + 0.5) * self.h

    def boundaries(self) -> np.ndarray:
        return self.start + np.arange(self.n + 1) * self.h


def _reduce_circle(d: np.ndarray) -> np.ndarray:
    """Reduce distances mod 1 into [0, 1/2]."""
    r = np.mod(d, 1.0)
    return np.minimum(r, 1.0 - r)


def covariance_values(spec: KernelSpec, d, *, warn: bool = True) -> np.ndarray:
    """Vectorized kernel evaluation at nonnegative distances ``d``."""
    d = np.atleast_1d(np.asarray(d, float))
    if np.any(d < 0):
        raise PreconditionError("distances must be nonnegative")
    fam = spec.family
    delta, eps, lam = spec.delta, spec.epsilon, spec.lam
    out = np.zeros_like(d)

    if fam is KernelFamily.CIRCLE_H:
        y = _reduce_circle(d)
        ystar = (2.0 / math.pi) * math.atan(0.5 * math.pi * eps)
        ambiguous = (y > 0) & (y <= ystar)
        if np.any(ambiguous):
            raise AmbiguousBranch(
                "CIRCLE_H covariance at 0 < d <= (2/pi)arctan(pi eps/2): the "
                "printed third row has no selector condition; refusing to guess")
        at_zero = y == 0
        out[at_zero] = (math.log(1.0 / eps)
                        + 0.5 * math.log(math.pi ** 2 * eps ** 2 + 4.0)
                        + (2.0 / math.pi) * math.atan(0.5 * math.pi * eps) / eps)
        far = ~at_zero
        out[far] = 2.0 * math.log(2.0) + np.log(1.0 / (2.0 * np.sin(math.pi * y[far])))
        return out

    if fam is KernelFamily.SCALED_U:
        sup = delta / lam
        near = d <= eps
        mid = (d > eps) & (d < sup)
        if eps > 0:
            out[near] = (math.log(delta / eps)
                         - (1.0 / eps - 1.0 / delta) * d[near]
                         + (1.0 - lam) * (1.0 - d[near] / delta))
        else:
            out[near] = np.inf  # d = 0 with eps = 0: untruncated variance
        dm = d[mid]
        out[mid] = (np.log(delta / dm) - 1.0 + dm / delta
                    + (1.0 - lam) * (1.0 - dm / delta))
        if warn and np.any((d >= delta) & (d < sup)):
            warnings.warn(
                "SCALED_U covariance evaluated on [delta, delta/lambda): value "
                "is negative there and the associated measure is undefined",
                NegativeCovarianceWarning, stacklevel=2)
        return out

    # LINE_U / CONE_OMEGA / PERTURBED_G all vanish past delta.
    near = d <= eps
    mid = (d > eps) & (d < delta)
    if fam is KernelFamily.CONE_OMEGA:
        if eps > 0:
            out[near] = math.log(delta / eps) + 1.0 - d[near] / eps
        else:
            out[near] = np.inf
        out[mid] = np.log(delta / d[mid])
        return out

    if eps > 0:
        out[near] = math.log(delta / eps) - (1.0 / eps - 1.0 / delta) * d[near]
    else:
        out[near] = np.inf
    out[mid] = np.log(delta / d[mid]) + d[mid] / delta - 1.0
    if fam is KernelFamily.PERTURBED_G:
        inside = d < delta
        out[inside] += spec.g_at(d[inside])
    return out


def covariance(spec: KernelSpec, d: float) -> float:
    """Scalar kernel evaluation; total on d >= 0 except the circle's
    unclaimed branch (AmbiguousBranch)."""
    return float(covariance_values(spec, [float(d)])[0])


# -- geometric oracle ----------------------------------------------------------

def _adaptive_simpson(f, a: float, b: float, tol: float, budget: list) -> float:
    """Adaptive Simpson with a shared subdivision budget (spec cap 2**20)."""
    if b <= a:
        return 0.0

    def simpson(x0, x2, f0, f1, f2):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    m = 0.5 * (a + b)
    fa, fm, fb = f(a), f(m), f(b)
    whole = simpson(a, b, fa, fm, fb)
    stack = [(a, b, fa, fm, fb, whole, tol)]
    total = 0.0
    while stack:
        x0, x2, f0, f1, f2, est, t = stack.pop()
        budget[0] += 1
        if budget[0] > 2 ** 20:
            raise QuadratureFailure(
                "area oracle: subdivision cap 2**20 reached before tolerance")
        xl = 0.5 * (x0 + x2)
        fl = f(0.5 * (x0 + xl))
        fr = f(0.5 * (xl + x2))
        left = simpson(x0, xl, f0, fl, f1)
        right = simpson(xl, x2, f1, fr, f2)
        if abs(left + right - est) <= 15.0 * t:
            total += left + right + (left + right - est) / 15.0
        else:
            stack.append((x0, xl, f0, fl, f1, left, 0.5 * t))
            stack.append((xl, x2, f1, fr, f2, right, 0.5 * t))
    return total


def area_oracle(spec: KernelSpec, x1: float, x2: float, quad_tol: float = 1e-10) -> float:
    """Hyperbolic area of the intersection of the two shifted truncated
    regions, by numerical integration of the cross-section width over
    dx dy / y^2.  Independent recomputation of LINE_U / CONE_OMEGA."""
    if spec.family not in (KernelFamily.LINE_U, KernelFamily.CONE_OMEGA):
        raise PreconditionError("area oracle covers LINE_U and CONE_OMEGA only")
    if quad_tol <= 0:
        raise PreconditionError("quad_tol must be positive")
    d = abs(x2 - x1)
    delta, eps = spec.delta, spec.epsilon
    if d >= delta:
        return 0.0

    # Cross-section of one region at height y is an interval of width
    # min(y, delta) (triangle: only y <= delta exists); two copies at
    # distance d overlap on width (min(y, delta) - d)+.
    def f(y):
        return (min(y, delta) - d) / (y * y)

    lo = max(eps, d)
    budget = [0]
    total = _adaptive_simpson(f, lo, delta, quad_tol / 2.0, budget)
    if spec.family is KernelFamily.CONE_OMEGA:
        # Tail heights y in (delta, inf); substitute u = 1/y so the piece
        # becomes the integral of the constant width (delta - d) over
        # u in (0, 1/delta].
        total += _adaptive_simpson(lambda u: delta - d, 0.0, 1.0 / delta,
                                   quad_tol / 2.0, budget)
    return total


# -- gram matrices -------------------------------------------------------------

@dataclass(frozen=True)
class CovMatrix:
    """Symmetric kernel gram matrix with its PSD certificate."""

    matrix: np.ndarray
    min_eigenvalue: float
    psd_tol: float


def gram_matrix(spec: KernelSpec, grid: Grid, psd_tol: float | None = None) -> CovMatrix:
    """Assemble M[i, j] = covariance(spec, |x_i - x_j|) on the grid's cell
    centers and certify positive semidefiniteness up to -psd_tol."""
    if spec.family is KernelFamily.SCALED_U and grid.span > spec.delta:
        raise SpanTooLarge(
            f"SCALED_U measure undefined over sets longer than delta: "
            f"span {grid.span} > delta {spec.delta}")
    x = grid.centers()
    dist = np.abs(x[:, None] - x[None, :])
    vals = covariance_values(spec, dist.ravel(), warn=False)
    m = vals.reshape(grid.n, grid.n)
    m = 0.5 * (m + m.T)  # exact symmetry
    if not np.all(np.isfinite(m)):
        raise PreconditionError(
            "gram matrix has non-finite entries (epsilon = 0 at distance 0?)")
    min_eig = float(np.linalg.eigvalsh(m)[0])
    if psd_tol is None:
        psd_tol = 1e-8 * float(np.trace(m)) / grid.n
    if min_eig < -psd_tol:
        raise NotPositiveSemidefinite(
            f"min eigenvalue {min_eig:.3e} below -psd_tol {-psd_tol:.3e}")
    return CovMatrix(matrix=m, min_eigenvalue=min_eig, psd_tol=psd_tol)


def read_g_table(path) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Load a perturbation table from two-column CSV (x, g(x))."""
    xs, ys = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                x, y = float(row[0]), float(row[1])
            except ValueError:
                continue  # header row
            xs.append(x)
            ys.append(y)
    return tuple(xs), tuple(ys)
