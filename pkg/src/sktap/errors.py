"""Exception types shared by every module."""


class SkTapError(Exception):
    """Base class for errors raised by this package."""


class DomainError(SkTapError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class ParameterError(SkTapError, ValueError):
    """A model or algorithm parameter is invalid."""


class NumericalError(SkTapError, ArithmeticError):
    """An iteration failed to converge or a quantity degenerated."""


class CapacityError(SkTapError, ValueError):
    """The requested problem size exceeds what the routine supports."""


class ConfigError(SkTapError, ValueError):
    """An experiment configuration is malformed."""
