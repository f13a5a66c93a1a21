"""Exception types shared across the toolkit."""


class LmnerError(Exception):
    """Base class for all toolkit errors."""


class ContractError(LmnerError):
    """An operation was called with arguments that violate its contract."""


class NumericError(LmnerError):
    """A non-finite value was produced where finite math was expected."""


class DataError(LmnerError):
    """Malformed input data (corpus files, embedding files, tag sequences)."""


class ConfigError(LmnerError):
    """Invalid or incomplete run configuration."""


class CheckpointError(LmnerError):
    """Unreadable checkpoint or architecture mismatch on load."""
