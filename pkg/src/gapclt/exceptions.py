"""Exception types shared across the package."""


class GapCltError(Exception):
    """Base class for all package errors."""


class DomainError(GapCltError, ValueError):
    """A parameter lies outside its mathematical domain."""


class StructureError(GapCltError, ValueError):
    """Array shapes or layer dimensions are inconsistent."""


class DegenerateError(GapCltError, ValueError):
    """A quantity has zero variance where a positive one is required."""


class ResourceError(GapCltError, MemoryError):
    """A request would need an unreasonable amount of memory."""


class FormatError(GapCltError, ValueError):
    """A file or config does not follow the expected format."""


class DivergenceError(GapCltError, FloatingPointError):
    """Training produced non-finite values."""


class TruncationWarning(UserWarning):
    """An infinite series was truncated without a certified tail bound."""
