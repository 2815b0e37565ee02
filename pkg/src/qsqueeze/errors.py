"""Exception hierarchy shared by all modules."""


class QSqueezeError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(QSqueezeError, ValueError):
    """Invalid parameters or inconsistent configuration."""


class TruncationError(QSqueezeError):
    """A state has non-negligible weight in the top Fock levels."""


class ContractError(QSqueezeError, ValueError):
    """An input violates an operation's precondition (e.g. non-Hermitian)."""


class PrecisionError(QSqueezeError, ArithmeticError):
    """Cancellation exceeded what the requested working precision can resolve."""


class UnderflowError(QSqueezeError, ArithmeticError):
    """A probability or trace fell below the representable range."""


class NumericError(QSqueezeError, ArithmeticError):
    """An integrator or quadrature failed its own accuracy checks."""
