"""Exception types raised across the package.

Everything inherits from :class:`SchroChaosError` so callers can catch the
whole family with one clause.  Each class maps to one well-defined failure
mode; none of them are used for generic programming errors (those stay
``ValueError`` / ``TypeError``).
"""


class SchroChaosError(Exception):
    """Base class for all package-specific failures."""


class EmptySupport(SchroChaosError):
    """A discrete measure was given zero atoms."""


class DuplicateAtom(SchroChaosError):
    """Two atoms of one discrete measure coincide."""


class NonpositiveWeight(SchroChaosError):
    """A probability weight is zero or negative."""


class NegativeCost(SchroChaosError):
    """An explicit cost matrix contains a negative entry."""


class NonConvergence(SchroChaosError):
    """Iterative marginal fitting exhausted its iteration budget."""


class OverflowInKernel(SchroChaosError):
    """Kernel entries left the representable range for the requested temperature."""


class MarginalMismatch(SchroChaosError):
    """A coupling does not have the marginals it is required to have."""


class TooLargeForEnumeration(SchroChaosError):
    """An exact enumeration was requested beyond its documented size cap."""


class Overflow(SchroChaosError):
    """A signed inclusion-exclusion accumulation left the finite range."""


class DegeneratePermanent(SchroChaosError):
    """A permanent underflowed to zero or its input had a zero entry."""


class NotADistribution(SchroChaosError):
    """Weights that must form a probability vector do not."""


class SpectralGapViolation(SchroChaosError):
    """The second singular value is too close to one for resolvent inversion."""


class NotMeanZero(SchroChaosError):
    """An input function violates a required mean-zero constraint."""


class NotDegenerate(SchroChaosError):
    """A two-variable function fails the required conditional mean-zero property."""


class NotDegenerateFirstOrder(SchroChaosError):
    """The first-order variance does not vanish where a degenerate limit is required."""


class BatchTooSmall(SchroChaosError):
    """A statistic needs more sample points than the batch provides."""


class DegenerateVariance(SchroChaosError):
    """A normal rescaling was requested but the limiting variance is zero."""


class EmptySample(SchroChaosError):
    """A distribution comparison received an empty sample."""


class SchemaViolation(SchroChaosError):
    """A configuration document does not match the expected schema."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
