class DbarError(Exception):
    """Base class for library errors."""


class ArgumentError(DbarError, ValueError):
    pass


class DomainError(DbarError, ValueError):
    """A point or region lies outside the truncated domain."""


class TruncationError(DbarError):
    """The truncation is too small for the requested construction."""


class ConstructionError(DbarError):
    """A construction step failed; usually a violated hypothesis."""


class HypothesisError(ConstructionError):
    pass
