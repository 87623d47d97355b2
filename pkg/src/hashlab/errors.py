"""Exception types shared across the package."""


class HashlabError(Exception):
    """Base class for all hashlab errors."""


class ShapeError(HashlabError):
    """Tensor or layer shapes are inconsistent, or an inferred extent is invalid."""


class LengthMismatch(ShapeError):
    """Two binary codes (or code collections) disagree on bit length."""


class NumericError(HashlabError):
    """A forward/backward pass or optimizer step produced non-finite values."""


class DomainError(HashlabError):
    """An argument falls outside the documented domain of an operation."""


class InfeasibleError(HashlabError):
    """A sampling or batching request cannot be satisfied by the given data."""


class FormatError(HashlabError):
    """A file is malformed, truncated, or has an unsupported version."""


class UndefinedError(HashlabError):
    """A metric is undefined for the given input (e.g. no relevant items)."""


class ConfigError(HashlabError):
    """A configuration file or value is invalid; the message names the field."""
