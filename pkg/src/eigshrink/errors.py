"""Exception hierarchy shared across the package."""


class EigshrinkError(Exception):
    """Base class for all package errors."""


class DomainError(EigshrinkError, ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateInputError(EigshrinkError, ValueError):
    """Input data is degenerate (all-zero column, zero row, ...)."""


class InsufficientSampleError(EigshrinkError, ValueError):
    """Too few observations for the requested estimator (n <= p)."""


class ConditioningError(EigshrinkError, ArithmeticError):
    """A matrix iterate lost positive definiteness."""


class DivergenceError(EigshrinkError, ArithmeticError):
    """A requested expectation does not exist (divergent integral)."""


class RootBracketError(EigshrinkError, ArithmeticError):
    """The consistency equation has no sign change in the search bracket."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class PreconditionError(EigshrinkError, ValueError):
    """A required input (e.g. the d.o.f. estimate) is missing."""


class ConfigError(EigshrinkError, ValueError):
    """Malformed experiment configuration or input file."""
