"""Exception and warning types shared by all modules."""


class MetastateError(Exception):
    """Base class for model and validation errors (CLI exit code 1)."""


class LandscapeValidationError(MetastateError):
    pass


class DegenerateCritical(LandscapeValidationError):
    """A critical point violates the Morse nondegeneracy tolerance."""


class UnresolvedConnectivity(LandscapeValidationError):
    """Descent flow from a saddle did not settle at a minimum inside the box."""


class QuadratureNotConverged(MetastateError):
    pass


class ValleyContainsOtherCritical(LandscapeValidationError):
    """Sublevel component around a minimum swallowed another critical point."""


class Disconnected(LandscapeValidationError):
    pass


class NotSimple(MetastateError):
    """A set of minima does not share a common energy level."""


class NoFiniteDepth(MetastateError):
    pass


class TreeInvariantViolation(MetastateError):
    pass


class TraceIllPosed(MetastateError):
    """Trace set misses a closed class of the chain."""


class AbsorbedOutsideTargets(MetastateError):
    pass


class StationarityMismatch(MetastateError):
    pass


class InvalidWeights(MetastateError):
    pass


class ConsistencyViolation(MetastateError):
    pass


class NotErgodic(MetastateError):
    pass


class BoundaryHitExcessive(MetastateError):
    """Too many Euler steps were clamped at the bounding box."""


class HorizonTooShort(MetastateError):
    pass


class MissingArtifacts(MetastateError):
    pass


class GenericityWarning(UserWarning):
    """Near-ties in energies; results depend on tie-breaking (CLI exit code 2)."""


class GenericityError(MetastateError):
    """Depth tie between consecutive layers; no valid valley radius exists."""
