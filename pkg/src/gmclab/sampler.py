"""Gaussian field sampling on grids, multi-scale hierarchies, lognormal factors.

Randomness is counter-based: every independent draw owns a Philox stream
keyed by (master seed, stream ids...), so regeneration is bit-identical and
independent of batching or evaluation order.

Stationary kernels on uniform grids are sampled by exact circulant
embedding: the first row is padded with the kernel's zero tail until the
periodization argument applies (padded length >= span + support and
>= 2 * support), which makes the circulant eigenvalues nonnegative up to
float error whenever the kernel is a genuine covariance.  If the spectrum
still dips below the tolerance the sampler falls back to dense Cholesky
with a diagonal jitter capped at 1e-10 times the mean diagonal; the chosen
path is recorded on each sample.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import next_fast_len

from .errors import (
    BadLambda,
    EmbeddingFailure,
    NotPositiveSemidefinite,
    PreconditionError,
    SpanTooLarge,
)
from .kernels import Grid, KernelFamily, KernelSpec, covariance_values

__all__ = [
    "FieldSample",
    "HierarchySample",
    "LognormalKind",
    "LognormalFactor",
    "stream_key",
    "generator",
    "sample_field",
    "sample_field_matrix",
    "sample_scale_hierarchy",
    "sample_lognormal",
    "sample_lognormal_values",
]

_MASK64 = (1 << 64) - 1

# Stream-id namespaces; every module drawing randomness goes through these.
STREAM_FIELD = 1
STREAM_HIERARCHY = 2
STREAM_LOGNORMAL = 3


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def stream_key(seed: int, *ids: int) -> int:
    """Mix (seed, ids...) into one 64-bit Philox key."""
    h = _splitmix64(seed & _MASK64)
    for v in ids:
        h = _splitmix64(h ^ (int(v) & _MASK64))
    return h


def generator(seed: int, *ids: int) -> np.random.Generator:
    """Independent counter-based generator for the given stream."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *ids)))


@dataclass
class FieldSample:
    """One centered Gaussian vector over a grid."""

    grid: Grid
    values: np.ndarray
    spec: KernelSpec
    seed: int
    index: int = 0
    method: str = "circulant"


@dataclass
class HierarchySample:
    """Jointly consistent samples U^{delta_1}, ..., U^{delta_N} built by
    adding independent band increments on top of the finest scale."""

    deltas: tuple[float, ...]
    grid: Grid
    epsilon: float
    family: KernelFamily
    seed: int
    values: np.ndarray  # shape (N, count, n), level k-1 holds U^{delta_k}
    methods: tuple[str, ...]

    @property
    def count(self) -> int:
        return self.values.shape[1]

    def level_spec(self, k: int) -> KernelSpec:
        """KernelSpec of U^{delta_k} (1-based k as in the scale sequence)."""
        return KernelSpec(self.family, delta=self.deltas[k - 1], epsilon=self.epsilon)

    def level_values(self, k: int) -> np.ndarray:
        return self.values[k - 1]


# -- sampling plans ------------------------------------------------------------

class _CirculantPlan:
    def __init__(self, radial, support: float, grid: Grid):
        h, n = grid.h, grid.n
        need = max(
            int(math.ceil((grid.span + support) / h)) + 1,
            int(math.ceil(2.0 * support / h)) + 1,
            2 * n,
        )
        m = next_fast_len(need)
        j = np.arange(m)
        dist = np.minimum(j, m - j) * h
        row = radial(dist)
        lam = np.fft.rfft(row).real
        peak = float(lam.max(initial=0.0))
        if peak <= 0 or float(lam.min()) < -1e-8 * peak:
            raise EmbeddingFailure(
                f"circulant spectrum dips to {lam.min():.3e} (peak {peak:.3e})")
        self.m = m
        self.n = n
        self.sqrt_gain = np.sqrt(np.clip(lam, 0.0, None) * m)

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        mh = self.sqrt_gain.size  # m//2 + 1
        a = rng.standard_normal(mh)
        b = rng.standard_normal(mh)
        z = (a + 1j * b) / math.sqrt(2.0)
        z[0] = a[0]
        if self.m % 2 == 0:
            z[-1] = a[-1]
        return np.fft.irfft(self.sqrt_gain * z, self.m)[: self.n]


class _CirclePlan(_CirculantPlan):
    """Exact spectral sampler on the full unit circle (span == 1): the gram
    matrix itself is circulant in the wrapped distance."""

    def __init__(self, radial, grid: Grid):
        h, n = grid.h, grid.n
        j = np.arange(n)
        dist = np.minimum(j, n - j) * h
        row = radial(dist)
        lam = np.fft.rfft(row).real
        peak = float(lam.max(initial=0.0))
        if peak <= 0 or float(lam.min()) < -1e-8 * peak:
            raise EmbeddingFailure(
                f"circle spectrum dips to {lam.min():.3e} (peak {peak:.3e})")
        self.m = n
        self.n = n
        self.sqrt_gain = np.sqrt(np.clip(lam, 0.0, None) * n)


class _DensePlan:
    def __init__(self, radial, grid: Grid):
        x = grid.centers()
        dist = np.abs(x[:, None] - x[None, :])
        m = radial(dist.ravel()).reshape(grid.n, grid.n)
        m = 0.5 * (m + m.T)
        if not np.all(np.isfinite(m)):
            raise PreconditionError("covariance matrix has non-finite entries")
        mean_diag = float(np.trace(m)) / grid.n
        self.n = grid.n
        self.chol = None
        for jitter in (0.0, 1e-14 * mean_diag, 1e-12 * mean_diag, 1e-10 * mean_diag):
            try:
                self.chol = np.linalg.cholesky(m + jitter * np.eye(grid.n))
                break
            except np.linalg.LinAlgError:
                continue
        if self.chol is None:
            raise NotPositiveSemidefinite(
                "dense factorization failed under the jitter cap "
                "1e-10 x mean diagonal")

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        return self.chol @ rng.standard_normal(self.n)


def _radial_for(spec: KernelSpec):
    if spec.family is KernelFamily.CIRCLE_H:
        return lambda d: covariance_values(spec, d, warn=False)
    return lambda d: covariance_values(spec, d, warn=False)


def _make_plan(spec: KernelSpec, grid: Grid):
    """Pick the sampling path; returns (plan, method-name)."""
    radial = _radial_for(spec)
    if spec.family is KernelFamily.CIRCLE_H:
        if abs(grid.span - 1.0) < 1e-9:
            try:
                return _CirclePlan(radial, grid), "circulant"
            except EmbeddingFailure:
                pass
        return _DensePlan(radial, grid), "dense"
    try:
        return _CirculantPlan(radial, spec.support, grid), "circulant"
    except EmbeddingFailure:
        return _DensePlan(radial, grid), "dense"


def _validate_sampling(spec: KernelSpec, grid: Grid):
    if spec.epsilon <= 0.0 and spec.family is not KernelFamily.CIRCLE_H:
        raise PreconditionError("sampling requires epsilon > 0 (finite variance)")
    if spec.family is KernelFamily.SCALED_U and grid.span > spec.delta:
        raise SpanTooLarge(
            f"SCALED_U span {grid.span} exceeds delta {spec.delta}")


def sample_field_matrix(spec: KernelSpec, grid: Grid, count: int, seed: int,
                        base_stream: int = 0, trial_offset: int = 0):
    """Batch workhorse: (count, n) matrix of independent field draws plus the
    factorization method used.  Row i is a pure function of
    (spec, grid, seed, base_stream, trial_offset + i)."""
    if count < 1:
        raise PreconditionError("count must be positive")
    _validate_sampling(spec, grid)
    plan, method = _make_plan(spec, grid)
    out = np.empty((count, grid.n))
    for i in range(count):
        rng = generator(seed, STREAM_FIELD, base_stream, trial_offset + i)
        out[i] = plan.draw(rng)
    return out, method


def sample_field(spec: KernelSpec, grid: Grid, count: int, seed: int,
                 base_stream: int = 0, trial_offset: int = 0) -> list[FieldSample]:
    """Draw ``count`` independent centered Gaussian vectors with the spec's
    covariance on the grid."""
    values, method = sample_field_matrix(spec, grid, count, seed,
                                         base_stream, trial_offset)
    return [
        FieldSample(grid=grid, values=values[i], spec=spec, seed=seed,
                    index=trial_offset + i, method=method)
        for i in range(count)
    ]


def sample_scale_hierarchy(deltas, grid: Grid, count: int, seed: int,
                           family: KernelFamily = KernelFamily.LINE_U,
                           epsilon: float | None = None,
                           base_stream: int = 0,
                           trial_offset: int = 0) -> HierarchySample:
    """Jointly consistent multi-scale draw: the finest field U^{delta_N} is
    sampled directly and each coarser U^{delta_k} adds an independent band
    increment with covariance R^{delta_k} - R^{delta_{k+1}}.

    deltas must be strictly decreasing (delta_1 > ... > delta_N > 0); the
    finer truncations are then measurable functions of the coarser draw plus
    independent bands, matching the scale filtration.
    """
    deltas = tuple(float(d) for d in deltas)
    if len(deltas) < 1:
        raise PreconditionError("need at least one scale")
    if any(d2 >= d1 for d1, d2 in zip(deltas, deltas[1:])):
        raise PreconditionError("deltas must be strictly decreasing")
    if epsilon is None:
        epsilon = grid.h
    if epsilon > deltas[-1]:
        raise PreconditionError(
            f"epsilon {epsilon} exceeds the finest scale {deltas[-1]}")
    n_levels = len(deltas)
    specs = [KernelSpec(family, delta=d, epsilon=epsilon) for d in deltas]
    _validate_sampling(specs[0], grid)

    values = np.empty((n_levels, count, grid.n))
    methods = []

    # Finest level first (level index n_levels - 1 holds delta_N).
    plan, method = _make_plan(specs[-1], grid)
    methods.append(method)
    for i in range(count):
        rng = generator(seed, STREAM_HIERARCHY, base_stream, n_levels - 1,
                        trial_offset + i)
        values[n_levels - 1, i] = plan.draw(rng)

    for k in range(n_levels - 2, -1, -1):
        coarse, fine = specs[k], specs[k + 1]

        def band(d, coarse=coarse, fine=fine):
            return (covariance_values(coarse, d, warn=False)
                    - covariance_values(fine, d, warn=False))

        try:
            plan = _CirculantPlan(band, coarse.support, grid)
            methods.append("circulant")
        except EmbeddingFailure:
            plan = _DensePlan(band, grid)
            methods.append("dense")
        for i in range(count):
            rng = generator(seed, STREAM_HIERARCHY, base_stream, k,
                            trial_offset + i)
            values[k, i] = values[k + 1, i] + plan.draw(rng)

    return HierarchySample(deltas=deltas, grid=grid, epsilon=epsilon,
                           family=family, seed=seed, values=values,
                           methods=tuple(reversed(methods)))


# -- lognormal scaling factors --------------------------------------------------

class LognormalKind(enum.Enum):
    Z = "Z"          # variance ln(1/lambda) - 1 + lambda (triangle scaling)
    OMEGA = "OMEGA"  # variance ln(1/lambda)            (cone scaling)


@dataclass(frozen=True)
class LognormalFactor:
    kind: LognormalKind
    lam: float
    gamma: float
    r: float
    value: float  # the normalized exponent  gamma N(0, r) - (gamma^2/2) r


def lognormal_variance(kind: LognormalKind, lam: float) -> float:
    if not (0.0 < lam < 1.0):
        raise BadLambda(f"lambda must lie in (0, 1), got {lam}")
    if kind is LognormalKind.Z:
        return math.log(1.0 / lam) - 1.0 + lam
    return math.log(1.0 / lam)


def sample_lognormal_values(kind: LognormalKind, lam: float, gamma: float,
                            count: int, seed: int, stream: int = 0) -> np.ndarray:
    """count draws of the normalized exponent gamma N(0,r) - (gamma^2/2) r;
    exp of it has mean exactly 1."""
    if gamma < 0:
        raise PreconditionError("gamma must be nonnegative")
    r = lognormal_variance(kind, lam)
    rng = generator(seed, STREAM_LOGNORMAL, stream)
    z = rng.standard_normal(count)
    return gamma * math.sqrt(r) * z - 0.5 * gamma * gamma * r


def sample_lognormal(kind: LognormalKind, lam: float, gamma: float,
                     seed: int, stream: int = 0) -> LognormalFactor:
    value = float(sample_lognormal_values(kind, lam, gamma, 1, seed, stream)[0])
    return LognormalFactor(kind=kind, lam=lam, gamma=gamma,
                           r=lognormal_variance(kind, lam), value=value)
