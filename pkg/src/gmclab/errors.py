"""Semantic exception hierarchy.

Precondition violations (bad arguments, geometry, hypothesis ranges) and
numerical failures (quadrature, factorization) are kept on separate branches
so the CLI can map them to distinct exit codes.
"""


class GmclabError(Exception):
    """Base error for the package."""


class PreconditionError(GmclabError):
    """An operation was called outside its contract."""


class NumericalError(GmclabError):
    """A numerical routine failed to reach its target."""


# -- kernel / gram errors -----------------------------------------------------

class AmbiguousBranch(PreconditionError):
    """Circle-kernel query falls in the region whose printed formula has no
    selector condition; we refuse to guess its domain."""


class QuadratureFailure(NumericalError):
    """Adaptive quadrature could not reach the requested tolerance under the
    subdivision cap."""


class SpanTooLarge(PreconditionError):
    """Scaled-kernel gram matrix requested over a set longer than the height
    delta, where the scaled measure is undefined."""


class NotPositiveSemidefinite(NumericalError):
    """Gram matrix has an eigenvalue below -psd_tol."""


class EmbeddingFailure(NumericalError):
    """Circulant embedding produced negative spectral mass (internal; the
    sampler falls back to dense factorization and records the fact)."""


# -- sampler errors -----------------------------------------------------------

class BadLambda(PreconditionError):
    """Lognormal scale parameter outside (0, 1)."""


# -- measure / inverse errors -------------------------------------------------

class OutOfDomain(PreconditionError):
    """Point or interval outside the measure's grid."""


class OutOfMass(PreconditionError):
    """Inverse queried beyond the remaining total mass."""


class MismatchedHierarchy(PreconditionError):
    """Precomposition of measures that do not come from one joint draw."""


class PrecheckFailed(PreconditionError):
    """Covariance hypotheses of a comparison inequality are violated."""


# -- graph / config errors ----------------------------------------------------

class BadConfig(PreconditionError):
    """ScaleConfig invariants violated."""


class TooLargeForExact(PreconditionError):
    """Exact independence number requested above the branch-and-bound cap."""


class OutOfRange(PreconditionError):
    """KL divergence argument not strictly inside (0, 1)."""


class BadParams(PreconditionError):
    """Feasibility-check parameters outside their ranges."""


# -- estimator errors ---------------------------------------------------------

class ExponentOutOfRange(PreconditionError):
    """Moment exponent violates the hypothesis of the statement under test."""


class InsufficientTrials(PreconditionError):
    """Monte Carlo run requested with too few trials for batch statistics."""


class DegenerateInput(PreconditionError):
    """Regression input with fewer than two points or nonpositive values."""


class EmptySample(PreconditionError):
    """Two-sample test invoked with an empty sample."""


# -- dilatation errors --------------------------------------------------------

class DomainExceeded(PreconditionError):
    """Whitney evaluation needs inverse values beyond the available mass."""
