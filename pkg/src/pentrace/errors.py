"""Exception types shared across the toolkit."""


class PentraceError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(PentraceError):
    """A config object or file violates its invariants."""


class ContractError(PentraceError):
    """An operation was called with inputs outside its contract."""


class DegenerateGeometryError(PentraceError):
    """Scene geometry makes the requested quantity undefined or unsolvable."""


class NoIntersectionError(DegenerateGeometryError):
    """Bearing rays are parallel or coincident; no triangulation point."""


class IllConditionedError(PentraceError):
    """A linear solve is numerically singular; regularization needed."""


class ParseError(PentraceError):
    """An artifact file on disk is malformed."""
