"""Monte Carlo engine: moment estimators, exponent fits, distributional checks.

Every experiment draws its randomness from counter-based streams keyed by
(seed, experiment stream, trial index), so tables are bit-reproducible and
independent of batching.  Standard errors are batch means over 30 batches;
confidence intervals are 95% normal approximations.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _sps

from .errors import (
    BadLambda,
    BadParams,
    DegenerateInput,
    EmptySample,
    ExponentOutOfRange,
    InsufficientTrials,
    OutOfDomain,
    PreconditionError,
)
from .kernels import Grid, KernelFamily, KernelSpec
from .measure import (
    GmcParams,
    Normalization,
    build_mass_rows,
    sample_measure_rows,
    zeta,
)
from .inverse import invert_rows
from .sampler import (
    LognormalKind,
    lognormal_variance,
    sample_field_matrix,
    sample_lognormal_values,
    sample_scale_hierarchy,
)
from .tables import ExperimentTable, MomentEstimate, batch_means_stderr

__all__ = [
    "MomentTarget",
    "MomentQuery",
    "MultipointQuery",
    "MeasureFactory",
    "HierarchyFactory",
    "mc_moment",
    "FitResult",
    "loglog_fit",
    "KsResult",
    "ks_two_sample",
    "SlopeReport",
    "multifractal_slope_experiment",
    "ScalingLawReport",
    "scaling_law_experiment",
    "RatioMode",
    "RatioMomentReport",
    "ratio_moment_experiment",
    "SmallballReport",
    "smallball_experiment",
]

_BATCH = 256  # trial batching for memory control


# -- queries ---------------------------------------------------------------------

class MomentTarget(enum.Enum):
    GMC_MASS = "GMC_MASS"
    INVERSE_INCREMENT = "INVERSE_INCREMENT"
    RATIO = "RATIO"
    SHIFTED_MASS = "SHIFTED_MASS"
    SUP_MODULUS = "SUP_MODULUS"
    INF_MODULUS = "INF_MODULUS"
    MULTIPOINT_PRODUCT = "MULTIPOINT_PRODUCT"


@dataclass(frozen=True)
class MultipointQuery:
    """Product over scales k in S of (Q^k(J_k))^{p_k} (or of the ratio
    Q^k(J_k)/Q^k(I_k) when denominators are given), intersected with the
    consecutive gap events Q^{i_k}(a_{i_k}) - Q^{i_{k+1}}(b_{i_{k+1}}) >=
    delta_{i_{k+1}}."""

    levels: tuple[int, ...]                    # subset S of 1-based scale indices
    exponents: tuple[float, ...]               # p_k
    numerators: tuple[tuple[float, float], ...]  # J_k in mass coordinates
    denominators: tuple[tuple[float, float], ...] | None = None
    gap_a: tuple[float, ...] = ()              # a_{i_k} per level in S
    gap_b: tuple[float, ...] = ()              # b_{i_k} per level in S

    def __post_init__(self):
        m = len(self.levels)
        if m == 0 or len(self.exponents) != m or len(self.numerators) != m:
            raise PreconditionError("levels/exponents/numerators must align")
        if self.denominators is not None and len(self.denominators) != m:
            raise PreconditionError("denominators must align with levels")
        if self.gap_a and (len(self.gap_a) != m or len(self.gap_b) != m):
            raise PreconditionError("gap sequences must align with levels")
        if any(p < 0 for p in self.exponents):
            raise ExponentOutOfRange("multipoint exponents must be nonnegative")


@dataclass(frozen=True)
class MomentQuery:
    target: MomentTarget
    p: float = 1.0
    interval: tuple[float, float] | None = None   # GMC_MASS
    anchor: float | None = None                   # INVERSE_INCREMENT / SHIFTED_MASS
    length: float | None = None                   # increment / window width x or t
    window: float | None = None                   # L for the modulus targets
    numerator: tuple[float, float] | None = None  # RATIO
    denominator: tuple[float, float] | None = None
    multipoint: MultipointQuery | None = None

    def validate(self, params: GmcParams):
        beta = params.beta
        t = self.target
        if t is MomentTarget.GMC_MASS:
            if self.interval is None:
                raise PreconditionError("GMC_MASS needs an interval")
            if self.p >= params.moment_cap():
                raise ExponentOutOfRange(
                    f"GMC moment q={self.p} >= 2/gamma^2={params.moment_cap()}")
        elif t is MomentTarget.INVERSE_INCREMENT:
            if self.anchor is None or self.length is None:
                raise PreconditionError("INVERSE_INCREMENT needs anchor and length")
            if beta > 0 and self.p <= -((1.0 + beta) ** 2) / (4.0 * beta):
                raise ExponentOutOfRange(
                    f"inverse moment p={self.p} at or below "
                    f"-(1+gamma^2/2)^2/(2 gamma^2)")
        elif t is MomentTarget.SHIFTED_MASS:
            if self.anchor is None or self.length is None:
                raise PreconditionError("SHIFTED_MASS needs anchor and length")
            if not (0.0 < self.p < (1.0 / beta if beta > 0 else math.inf)):
                raise ExponentOutOfRange(
                    f"shifted-mass moment p={self.p} outside (0, 1/beta)")
        elif t is MomentTarget.SUP_MODULUS:
            if self.window is None or self.length is None:
                raise PreconditionError("SUP_MODULUS needs window L and length x")
            if not (1.0 <= self.p < params.moment_cap()):
                raise ExponentOutOfRange(
                    f"sup-modulus moment p={self.p} outside [1, 2/gamma^2)")
        elif t is MomentTarget.INF_MODULUS:
            if self.window is None or self.length is None:
                raise PreconditionError("INF_MODULUS needs window L and length x")
            if self.p <= 0:
                raise ExponentOutOfRange("inf-modulus moment needs p > 0")
        elif t is MomentTarget.RATIO:
            if self.numerator is None or self.denominator is None:
                raise PreconditionError("RATIO needs numerator and denominator")
            if self.p <= 0:
                raise ExponentOutOfRange("ratio moment needs p > 0")
        elif t is MomentTarget.MULTIPOINT_PRODUCT:
            if self.multipoint is None:
                raise PreconditionError("MULTIPOINT_PRODUCT needs a MultipointQuery")


# -- measure factories -------------------------------------------------------------

@dataclass(frozen=True)
class MeasureFactory:
    """Measure sampler used by mc_moment; one stream per trial index."""

    spec: KernelSpec
    grid: Grid
    params: GmcParams
    base_stream: int = 50

    def cumulative_rows(self, count: int, seed: int, offset: int = 0) -> np.ndarray:
        return sample_measure_rows(self.spec, self.grid, self.params, count,
                                   seed, self.base_stream, offset)


@dataclass(frozen=True)
class HierarchyFactory:
    """Joint multi-scale sampler for the multipoint targets."""

    deltas: tuple[float, ...]
    grid: Grid
    params: GmcParams
    family: KernelFamily = KernelFamily.LINE_U
    base_stream: int = 60

    def cumulative_stack(self, count: int, seed: int, offset: int = 0) -> np.ndarray:
        """(N, count, n+1) cumulative rows of one joint draw per trial."""
        hier = sample_scale_hierarchy(self.deltas, self.grid, count, seed,
                                      self.family, base_stream=self.base_stream,
                                      trial_offset=offset)
        n_levels = len(self.deltas)
        out = np.zeros((n_levels, count, self.grid.n + 1))
        for k in range(1, n_levels + 1):
            masses = build_mass_rows(hier.level_spec(k), self.grid, self.params,
                                     hier.level_values(k))
            np.cumsum(masses, axis=1, out=out[k - 1, :, 1:])
        return out


def _interp_rows(cum: np.ndarray, h: float, position: float) -> np.ndarray:
    """F(position) per row of cumulative arrays (position in [0, span])."""
    idx = position / h
    i0 = int(math.floor(idx))
    n = cum.shape[1] - 1
    if i0 >= n:
        return cum[:, n]
    frac = idx - i0
    return cum[:, i0] * (1.0 - frac) + cum[:, i0 + 1] * frac


def _window_masses(cum: np.ndarray, h: float, x: float, limit: float) -> np.ndarray:
    """Masses eta[T, T+x] for every grid-aligned T in [0, limit]; returns a
    (count, #offsets) matrix."""
    n = cum.shape[1] - 1
    j_max = int(math.floor(limit / h + 1e-9))
    shift = x / h
    i0 = int(math.floor(shift))
    frac = shift - i0
    j = np.arange(j_max + 1)
    hi = j + i0
    if hi[-1] + 1 > n:
        raise OutOfDomain("window sweep leaves the grid: L + x > span")
    upper = cum[:, hi] * (1.0 - frac) + cum[:, hi + 1] * frac
    return upper - cum[:, j]


def _q_increment_rows(cum: np.ndarray, h: float, lo: float, hi: float) -> np.ndarray:
    return invert_rows(cum, h, hi) - invert_rows(cum, h, lo)


def _mp_values(stack: np.ndarray, h: float, mq: MultipointQuery,
               deltas: tuple[float, ...]) -> np.ndarray:
    count = stack.shape[1]
    prod = np.ones(count)
    for j, level in enumerate(mq.levels):
        cum = stack[level - 1]
        a, b = mq.numerators[j]
        num = _q_increment_rows(cum, h, a, b)
        if mq.denominators is not None:
            c, d = mq.denominators[j]
            den = _q_increment_rows(cum, h, c, d)
            prod *= (num / den) ** mq.exponents[j]
        else:
            prod *= num ** mq.exponents[j]
    if mq.gap_a:
        ind = np.ones(count, bool)
        for j in range(len(mq.levels) - 1):
            k, k1 = mq.levels[j], mq.levels[j + 1]
            qa = invert_rows(stack[k - 1], h, mq.gap_a[j])
            qb = invert_rows(stack[k1 - 1], h, mq.gap_b[j + 1])
            ind &= (qa - qb) >= deltas[k1 - 1]
        prod = np.where(ind, prod, 0.0)
    return prod


def mc_moment(query: MomentQuery, factory, trials: int, seed: int) -> MomentEstimate:
    """Sample mean of the queried functional with batch-means stderr.

    Trials on which the gap event fails contribute 0 (indicator weighting,
    not rejection), so multipoint estimates stay unbiased for the
    intersected expectation.
    """
    if trials < 100:
        raise InsufficientTrials(f"need >= 100 trials, got {trials}")
    query.validate(factory.params)
    grid = factory.grid
    values = np.empty(trials)
    done = 0
    while done < trials:
        take = min(_BATCH, trials - done)
        if query.target is MomentTarget.MULTIPOINT_PRODUCT:
            stack = factory.cumulative_stack(take, seed, offset=done)
            values[done:done + take] = _mp_values(stack, grid.h,
                                                  query.multipoint,
                                                  factory.deltas)
        else:
            cum = factory.cumulative_rows(take, seed, offset=done)
            values[done:done + take] = _evaluate(query, cum, grid)
        done += take
    mean = float(values.mean())
    return MomentEstimate(p=query.p, mean=mean,
                          stderr=batch_means_stderr(values), trials=trials)


def _evaluate(query: MomentQuery, cum: np.ndarray, grid: Grid) -> np.ndarray:
    h = grid.h
    t = query.target
    if t is MomentTarget.GMC_MASS:
        a, b = query.interval
        a_rel, b_rel = a - grid.start, b - grid.start
        if not (0 <= a_rel <= b_rel <= grid.span * (1 + 1e-12)):
            raise OutOfDomain("interval outside the grid")
        vals = _interp_rows(cum, h, b_rel) - _interp_rows(cum, h, a_rel)
        return vals ** query.p
    if t is MomentTarget.INVERSE_INCREMENT:
        inc = _q_increment_rows(cum, h, query.anchor,
                                query.anchor + query.length)
        return inc ** query.p
    if t is MomentTarget.RATIO:
        num = _q_increment_rows(cum, h, *query.numerator)
        den = _q_increment_rows(cum, h, *query.denominator)
        return (num / den) ** query.p
    if t is MomentTarget.SHIFTED_MASS:
        q_a = invert_rows(cum, h, query.anchor)
        out = np.empty(cum.shape[0])
        n = cum.shape[1] - 1
        bounds = np.arange(n + 1) * h
        for i in range(cum.shape[0]):
            lo = q_a[i]
            hi = lo + query.length
            if hi > grid.span * (1 + 1e-12):
                out[i] = np.inf
            else:
                f = np.interp([lo, min(hi, grid.span)], bounds, cum[i])
                out[i] = f[1] - f[0]
        return out ** query.p
    if t is MomentTarget.SUP_MODULUS:
        w = _window_masses(cum, h, query.length, query.window)
        return w.max(axis=1) ** query.p
    if t is MomentTarget.INF_MODULUS:
        w = _window_masses(cum, h, query.length, query.window)
        return w.min(axis=1) ** (-query.p)
    raise PreconditionError(f"unsupported target {t}")


# -- fits and distribution tests -----------------------------------------------------

@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    stderr: float


def loglog_fit(points) -> FitResult:
    """Least squares of log y on log x with the slope's standard error."""
    pts = np.asarray(points, float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise DegenerateInput("need at least two (x, y) points")
    if np.any(pts <= 0):
        raise DegenerateInput("log-log fit needs positive coordinates")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    n = lx.size
    sx = lx - lx.mean()
    sxx = float(sx @ sx)
    if sxx == 0.0:
        raise DegenerateInput("abscissae are all equal")
    slope = float(sx @ (ly - ly.mean())) / sxx
    intercept = float(ly.mean() - slope * lx.mean())
    resid = ly - (intercept + slope * lx)
    if n > 2:
        sigma2 = float(resid @ resid) / (n - 2)
        stderr = math.sqrt(max(sigma2, 0.0) / sxx)
    else:
        stderr = 0.0
    return FitResult(slope=slope, intercept=intercept, stderr=stderr)


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float


def ks_two_sample(a, b) -> KsResult:
    """Two-sample Kolmogorov-Smirnov statistic with asymptotic p-value."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be nonempty")
    res = _sps.ks_2samp(a, b, method="asymp")
    return KsResult(statistic=float(res.statistic), p_value=float(res.pvalue))


# -- multifractal slopes --------------------------------------------------------------

@dataclass
class SlopeReport:
    table: ExperimentTable
    fits: dict[float, FitResult]  # q -> fitted exponent of E[mass(0,t)^q] in t


def multifractal_slope_experiment(q_list, t_list, gamma: float, delta: float,
                                  trials: int, seed: int, span: float = 1.0,
                                  resolution_exp: int = 14,
                                  family: KernelFamily = KernelFamily.LINE_U,
                                  base_stream: int = 95) -> SlopeReport:
    """Fitted exponents of E[mass(0, t)^q] over dyadic t.

    The estimator averages the q-th window mass over sliding windows of each
    stationary draw (stride t/2) before averaging over draws; stationarity
    keeps it an empirical estimate of E[mass(0,t)^q] while the extra
    averaging tames the q-moment's t^{zeta(2q)-2 zeta(q)} relative variance
    at the small-t end.  Standard errors are batch means across draws.
    """
    qs = [float(q) for q in q_list]
    ts = sorted(float(t) for t in t_list)
    params = GmcParams(gamma, Normalization.MEAN_ONE)
    for q in qs:
        if q >= params.moment_cap():
            raise ExponentOutOfRange(
                f"q = {q} at or above 2/gamma^2 = {params.moment_cap()}")
    h = 2.0 ** (-resolution_exp)
    if ts[0] < 8 * h:
        raise PreconditionError("resolution too coarse for the smallest t")
    if family is KernelFamily.CIRCLE_H:
        grid = Grid(0.0, h, int(round(1.0 / h)))
        spec = KernelSpec(KernelFamily.CIRCLE_H, delta=1.0, epsilon=h)
    else:
        grid = Grid(0.0, h, int(round(span / h)))
        spec = KernelSpec(family, delta=delta, epsilon=h)
    if ts[-1] > grid.span:
        raise OutOfDomain("largest t exceeds the grid span")

    sums = {(q, t): [] for q in qs for t in ts}
    done = 0
    while done < trials:
        take = min(_BATCH, trials - done)
        cum = sample_measure_rows(spec, grid, params, take, seed,
                                  base_stream, done)
        for t in ts:
            w = int(round(t / h))
            stride = max(1, w // 2)
            j0 = np.arange(0, grid.n - w + 1, stride)
            masses = cum[:, j0 + w] - cum[:, j0]
            for q in qs:
                sums[(q, t)].append((masses ** q).mean(axis=1))
        done += take

    rows = []
    fits = {}
    for q in qs:
        pts = []
        for t in ts:
            vals = np.concatenate(sums[(q, t)])
            est, se = float(vals.mean()), batch_means_stderr(vals)
            rows.append((q, t, est, se))
            pts.append((t, est))
        fits[q] = loglog_fit(pts)
    table = ExperimentTable(
        columns=("q", "t", "moment", "stderr"), rows=rows,
        meta={"gamma": gamma, "delta": delta, "trials": trials, "seed": seed,
              "family": spec.family.value, "resolution_exp": resolution_exp})
    return SlopeReport(table=table, fits=fits)


# -- scaling law -------------------------------------------------------------------

@dataclass
class ScalingLawReport:
    lam: float
    delta: float
    gamma: float
    family: KernelFamily
    trials: int
    ks: KsResult
    moment_checks: list[tuple]  # (p, empirical, expected, se, ok)
    lhs_mean: float
    rhs_mean: float

    @property
    def moments_ok(self) -> bool:
        return all(row[4] for row in self.moment_checks)


def scaling_law_experiment(delta: float, lam: float, interval, gamma: float,
                           trials: int, seed: int,
                           family: KernelFamily = KernelFamily.LINE_U,
                           resolution: int = 1024,
                           moment_ps=(-1.0, 2.0)) -> ScalingLawReport:
    """Sample both sides of the scaling identity
    eta^delta(lambda A) =d lambda e^{Zbar_lambda} eta^{delta,lambda}(A)
    and compare them by a two-sample KS test.

    Both sides use the full-variance normalization and the matched
    truncations eps_LHS = lambda * eps_RHS, which make the identity exact at
    the discrete level.  For the cone variant the right side reuses the
    plain cone kernel (the lambda-scaled cone covariance agrees with it on
    sets of diameter <= delta) and the lognormal has variance ln(1/lambda).
    """
    a0, a1 = float(interval[0]), float(interval[1])
    if not a1 > a0:
        raise PreconditionError("interval must be nondegenerate")
    if a1 - a0 > delta:
        raise OutOfDomain("scaling law needs |A| <= delta")
    if not (0.0 < lam <= 1.0):
        raise BadLambda(f"lambda must lie in (0, 1], got {lam}")
    if family not in (KernelFamily.LINE_U, KernelFamily.CONE_OMEGA):
        raise PreconditionError("scaling law covers LINE_U and CONE_OMEGA")

    params = GmcParams(gamma, Normalization.MEAN_ONE)
    h_r = (a1 - a0) / resolution
    grid_r = Grid(a0, h_r, resolution)
    grid_l = Grid(lam * a0, lam * h_r, resolution)

    if family is KernelFamily.LINE_U:
        spec_l = KernelSpec(KernelFamily.LINE_U, delta, epsilon=lam * h_r)
        spec_r = (KernelSpec(KernelFamily.LINE_U, delta, epsilon=h_r)
                  if lam == 1.0 else
                  KernelSpec(KernelFamily.SCALED_U, delta, epsilon=h_r, lam=lam))
        kind = LognormalKind.Z
    else:
        spec_l = KernelSpec(KernelFamily.CONE_OMEGA, delta, epsilon=lam * h_r)
        spec_r = KernelSpec(KernelFamily.CONE_OMEGA, delta, epsilon=h_r)
        kind = LognormalKind.OMEGA

    lhs = sample_measure_rows(spec_l, grid_l, params, trials, seed,
                              base_stream=70)[:, -1]
    rhs_mass = sample_measure_rows(spec_r, grid_r, params, trials, seed,
                                   base_stream=71)[:, -1]
    if lam == 1.0:
        zbar = np.zeros(trials)
        r = 0.0
    else:
        zbar = sample_lognormal_values(kind, lam, gamma, trials, seed, stream=72)
        r = lognormal_variance(kind, lam)
    rhs = lam * np.exp(zbar) * rhs_mass

    ks = ks_two_sample(lhs, rhs)
    beta = params.beta
    checks = []
    for p in moment_ps:
        emp = np.exp(p * zbar)
        mean = float(emp.mean())
        se = float(emp.std(ddof=1) / math.sqrt(trials))
        expected = math.exp(p * beta * r * (p - 1.0))
        checks.append((float(p), mean, expected, se,
                       abs(mean - expected) <= 3.0 * se or se == 0.0))
    return ScalingLawReport(lam=lam, delta=delta, gamma=gamma, family=family,
                            trials=trials, ks=ks, moment_checks=checks,
                            lhs_mean=float(lhs.mean()), rhs_mean=float(rhs.mean()))


# -- ratio moments -----------------------------------------------------------------

class RatioMode(enum.Enum):
    EQUAL_LENGTH = "EQUAL_LENGTH"
    DECREASING_NUMERATOR = "DECREASING_NUMERATOR"


@dataclass
class RatioMomentReport:
    mode: RatioMode
    table: ExperimentTable
    fit: FitResult
    fit_reciprocal: FitResult


def ratio_moment_experiment(a: float, b: float, x_list, p: float, gamma: float,
                            delta: float, trials: int, seed: int,
                            mode: RatioMode, r: float = 0.5,
                            span: float | None = None,
                            resolution: int | None = None,
                            base_stream: int = 80) -> RatioMomentReport:
    """Per-x estimates of E[(Q(J)/Q(I))^p] and the reciprocal ratio, with a
    log-log exponent fit over x.

    EQUAL_LENGTH: J = (a, a+x), I = (b, b+x) with b - a > x (so the
    separation constant c_{b-a} = (b-a)/x exceeds 1 for every listed x) and
    x < delta.  DECREASING_NUMERATOR: I = (b, b + r delta) fixed,
    J = (a, a+x) with |J| shrinking.
    """
    xs = sorted(float(v) for v in x_list)
    if not xs:
        raise PreconditionError("x_list must be nonempty")
    if mode is RatioMode.EQUAL_LENGTH:
        if any(v >= delta for v in xs):
            raise OutOfDomain("EQUAL_LENGTH requires x < delta")
        if b - a <= xs[-1]:
            raise OutOfDomain(
                "EQUAL_LENGTH geometry needs b - a > x for every x")
        need = b + xs[-1]
    else:
        if not (0.0 < r < 1.0):
            raise BadParams("DECREASING_NUMERATOR needs r in (0, 1)")
        need = max(b + r * delta, a + xs[-1])
    if a < 0 or b < 0:
        raise OutOfDomain("interval anchors must be nonnegative")

    if span is None:
        span = 2.0 * need + 2.0
    if resolution is None:
        h = max(xs[0] / 32.0, span / 2 ** 18)
        resolution = int(math.ceil(span / h))
    grid = Grid(0.0, span / resolution, resolution)
    spec = KernelSpec(KernelFamily.LINE_U, delta, epsilon=grid.h)
    params = GmcParams(gamma, Normalization.MEAN_ONE)

    sums = {x: [] for x in xs}
    sums_rec = {x: [] for x in xs}
    done = 0
    while done < trials:
        take = min(_BATCH, trials - done)
        cum = sample_measure_rows(spec, grid, params, take, seed,
                                  base_stream, done)
        for x in xs:
            j_lo, j_hi = a, a + x
            if mode is RatioMode.EQUAL_LENGTH:
                i_lo, i_hi = b, b + x
            else:
                i_lo, i_hi = b, b + r * delta
            num = _q_increment_rows(cum, grid.h, j_lo, j_hi)
            den = _q_increment_rows(cum, grid.h, i_lo, i_hi)
            ratio = (num / den) ** p
            sums[x].append(ratio)
            sums_rec[x].append((den / num) ** p)
        done += take

    rows = []
    pts, pts_rec = [], []
    for x in xs:
        vals = np.concatenate(sums[x])
        vals_rec = np.concatenate(sums_rec[x])
        mean, se = float(vals.mean()), batch_means_stderr(vals)
        mean_r, se_r = float(vals_rec.mean()), batch_means_stderr(vals_rec)
        rows.append((x, mean, se, mean_r, se_r))
        pts.append((x, mean))
        pts_rec.append((x, mean_r))
    table = ExperimentTable(
        columns=("x", "ratio_moment", "stderr", "reciprocal_moment",
                 "reciprocal_stderr"),
        rows=rows,
        meta={"mode": mode.value, "a": a, "b": b, "p": p, "gamma": gamma,
              "delta": delta, "trials": trials, "seed": seed, "r": r},
    )
    return RatioMomentReport(mode=mode, table=table, fit=loglog_fit(pts),
                             fit_reciprocal=loglog_fit(pts_rec))


# -- small ball --------------------------------------------------------------------

@dataclass
class SmallballReport:
    table: ExperimentTable
    alpha_hat: float
    alpha_stderr: float


def smallball_experiment(r_list, t: float, delta: float, gamma: float,
                         trials: int, seed: int, resolution: int = 2048,
                         base_stream: int = 90) -> SmallballReport:
    """Laplace-transform probe E[exp(-r eta^delta(0, t))] over a ladder of
    rates r, plus the decay-exponent fit: the small-ball bound predicts
    -log estimate ~ c (log r t)^alpha, so alpha is read off a fit of
    log(-log estimate) against log log(r t).  Rows with r t = 1 are kept in
    the table but excluded from the fit (their abscissa is -inf)."""
    rates = sorted(float(v) for v in r_list)
    if any(rv * t < 1.0 - 1e-12 for rv in rates):
        raise BadParams("small-ball regime needs r * t >= 1 for all r")
    grid = Grid(0.0, t / resolution, resolution)
    spec = KernelSpec(KernelFamily.LINE_U, delta, epsilon=grid.h)
    params = GmcParams(gamma, Normalization.PAPER)

    rows = []
    fit_pts = []
    masses = sample_measure_rows(spec, grid, params, trials, seed,
                                 base_stream)[:, -1]
    for rv in rates:
        vals = np.exp(-rv * masses)
        est, se = float(vals.mean()), batch_means_stderr(vals)
        rows.append((rv, est, se))
        if rv * t > 1.0 + 1e-12 and 0.0 < est < 1.0:
            fit_pts.append((math.log(rv * t), -math.log(est)))
    table = ExperimentTable(
        columns=("r", "laplace_estimate", "stderr"), rows=rows,
        meta={"t": t, "delta": delta, "gamma": gamma, "trials": trials,
              "seed": seed})
    if len(fit_pts) >= 2:
        fit = loglog_fit(fit_pts)
        alpha_hat, alpha_se = fit.slope, fit.stderr
    else:
        alpha_hat, alpha_se = math.nan, math.nan
    return SmallballReport(table=table, alpha_hat=alpha_hat,
                           alpha_stderr=alpha_se)
