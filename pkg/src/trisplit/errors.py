"""Exception hierarchy shared by all trisplit modules."""


class TrisplitError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(TrisplitError, ValueError):
    """Vector or matrix shapes do not agree."""


class NotSurjective(TrisplitError):
    """The operator has (numerically) no full row rank.

    The computed spectral data are attached so callers that only need the
    norm can still use them.
    """

    def __init__(self, message, norm=None, min_eig_aat=None):
        super().__init__(message)
        self.norm = norm
        self.min_eig_aat = min_eig_aat


class EmptyInterval(TrisplitError):
    """A parameter interval that should be nonempty came out empty."""


class NumericalDivergence(TrisplitError):
    """An iterate became non-finite or left the divergence guard."""

    def __init__(self, message, block=None, trace=None):
        super().__init__(message)
        self.block = block
        self.trace = trace


class AssumptionViolation(TrisplitError):
    """Parameters or a recorded step violate a checked assumption."""

    def __init__(self, message, report=None, trace=None):
        super().__init__(message)
        self.report = report
        self.trace = trace


class TooShort(TrisplitError, ValueError):
    """A sequence is too short for the requested diagnostic."""


class NotConverged(TrisplitError):
    """A diagnostic that needs a converged run received one that was not."""


class GridTooLarge(TrisplitError, ValueError):
    """A brute-force grid would exceed the point budget."""


class ConfigError(TrisplitError, ValueError):
    """A run configuration is malformed; the message names the line."""
