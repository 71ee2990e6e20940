"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class SingularityError(ArithmeticError):
    """A coefficient or density is singular at the requested point."""


class DivergenceError(ArithmeticError):
    """An improper integral does not converge at a named endpoint."""


class TabulationRangeError(DomainError):
    """A tabulated function was queried outside its tabulated window."""


class UndefinedBoundError(DomainError):
    """The lower bound of the stochastic time-change sandwich is not defined."""


class ConfigError(ValueError):
    """Inconsistent simulation or experiment configuration."""


class InconsistentEnvelopeWarning(RuntimeWarning):
    """Envelope functions violate the ordering alpha <= beta."""
