"""Exception hierarchy shared across the package."""


class JFlowError(Exception):
    """Base class for all errors raised by jflowlab."""


class PositivityError(JFlowError):
    """A matrix field failed a positivity requirement.

    Carries the offending grid-minimum eigenvalue and, when available,
    the grid index where it occurred.
    """

    def __init__(self, message, min_eig=None, location=None):
        super().__init__(message)
        self.min_eig = min_eig
        self.location = location


class NonFiniteError(JFlowError):
    """A computed field contains NaN or infinity (blow-up or misconfiguration)."""


class ValidationError(JFlowError):
    """Input data violated a declared invariant (rejected before computation)."""


class ConfigError(ValidationError):
    """An experiment configuration failed to parse or validate."""


class NewtonError(JFlowError):
    """The damped Newton iteration failed (stagnation, positivity, max_iter)."""


class ContinuationRequired(JFlowError):
    """Designed fallback: the problem needs the epsilon-continuation route."""
