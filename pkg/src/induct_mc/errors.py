"""Exception hierarchy shared by every engine.

The CLI maps any :class:`InductMCError` to exit code 2 and prints its class
name, so the names double as stable error identifiers.
"""


class InductMCError(Exception):
    """Base class for all engine errors."""


class DimensionMismatch(InductMCError, ValueError):
    pass


class NegativeEntry(InductMCError, ValueError):
    pass


class RowSumOutOfTolerance(InductMCError, ValueError):
    pass


class YUnreachable(InductMCError):
    """Some state never reaches the return set, so E_x tau is infinite."""


class NonUniqueStationary(InductMCError):
    """More than one closed recurrent class."""


class EmptyGrid(InductMCError, ValueError):
    pass


class QuadratureFailure(InductMCError):
    pass


class MomentTooLow(InductMCError, ValueError):
    pass


class NonNegativeDrift(InductMCError, ValueError):
    pass


class NonIntegerAtoms(InductMCError, ValueError):
    pass


class ExcursionCapExceeded(InductMCError):
    pass


class GridTooCoarse(InductMCError):
    pass


class BatchTooSmall(InductMCError, ValueError):
    pass


class TooFewSamples(InductMCError, ValueError):
    pass


class DegenerateVariance(InductMCError, ValueError):
    pass


class ConfigInvalid(InductMCError, ValueError):
    pass
