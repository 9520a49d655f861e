"""Exception hierarchy shared by all modules."""


class FermiSwitchError(Exception):
    """Base class for errors raised by this package."""


class ArgumentError(FermiSwitchError, ValueError):
    """An argument violates an operation's precondition."""


class ResourceLimitError(FermiSwitchError):
    """A configured size cap (basis dimension, term count, depth) was exceeded."""


class ConvergenceError(FermiSwitchError):
    """An iterative method could not reach its tolerance."""


class ConfigError(FermiSwitchError):
    """A run configuration could not be loaded."""


class ConfigNotFoundError(ConfigError):
    pass


class ConfigParseError(ConfigError):
    pass


class ConfigValidationError(ConfigError, ArgumentError):
    """A configuration value is invalid; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class InvariantViolation(FermiSwitchError):
    """A run finished but one of its checked invariants failed."""
