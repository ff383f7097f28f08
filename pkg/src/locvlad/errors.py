class LocVladError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(LocVladError, ValueError):
    """A binary or JSON artifact does not match its declared layout."""


class TruncationError(FormatError):
    """Payload shorter than the counts declared in the header."""


class ValidationError(LocVladError, ValueError):
    pass


class DomainError(LocVladError, ValueError):
    """An argument lies outside the domain an operation accepts."""
