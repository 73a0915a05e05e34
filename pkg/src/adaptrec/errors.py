"""Exception types shared across the package."""


class AdaptrecError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(AdaptrecError):
    """Tensor shapes incompatible with the requested operation."""


class DomainError(AdaptrecError):
    """Input outside an operation's mathematical domain (e.g. log of x <= 0)."""


class NumericError(AdaptrecError):
    """A forward computation produced NaN or Inf."""


class ContractError(AdaptrecError):
    """An internal precondition was violated by the caller."""


class CapacityError(AdaptrecError):
    """A configured capacity limit (e.g. maximum sequence length) was exceeded."""


class DataError(AdaptrecError):
    """Malformed or empty input data."""


class ParseError(DataError):
    """A data file could not be parsed; message carries the line number."""


class ConfigError(AdaptrecError):
    """Invalid configuration value or file."""


class CheckpointError(AdaptrecError):
    """A checkpoint file is malformed or inconsistent with the configuration."""
