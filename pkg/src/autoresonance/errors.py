"""Exception hierarchy shared by all modules."""


class AutoresonanceError(Exception):
    """Base class for errors raised by this package."""


class InvalidParameterError(AutoresonanceError, ValueError):
    pass


class NumericalBlowupError(AutoresonanceError, ArithmeticError):
    def __init__(self, tau, message=None):
        self.tau = tau
        super().__init__(message or f"non-finite oscillator state at tau={tau!r}")


class BracketError(AutoresonanceError):
    """Bisection bracket does not straddle the lock threshold."""


class InsufficientCoverageError(AutoresonanceError):
    pass


class FitError(AutoresonanceError):
    def __init__(self, message, residuals=None):
        self.residuals = residuals
        super().__init__(message)


class ConfigurationError(AutoresonanceError, ValueError):
    """Raised for bad configs; ``errors`` lists every problem found."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class StepSizeError(AutoresonanceError, ValueError):
    pass


class NotSeparatedError(AutoresonanceError):
    """Locked and unlocked populations are not yet resolvable."""


class DiagnosticDivergenceError(AutoresonanceError, ArithmeticError):
    pass
