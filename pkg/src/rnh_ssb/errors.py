"""Exception hierarchy shared by every solver and the CLI."""


class RNHError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigurationError(RNHError, ValueError):
    """Invalid grid, off-grid record time, CFL violation, bad CLI input."""

    exit_code = 2


class DomainError(RNHError, ValueError):
    """Argument outside the mathematical domain of an operation."""

    exit_code = 2


class CapacityError(RNHError):
    """Requested work exceeds a storage or compute budget."""

    exit_code = 3


class NumericalOverflowError(RNHError, ArithmeticError):
    pass


class InvalidStateError(RNHError, ValueError):
    pass


class FitError(RNHError, ValueError):
    pass
