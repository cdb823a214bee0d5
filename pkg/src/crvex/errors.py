class DomainError(ValueError):
    """An argument lies outside the domain where a formula is defined."""


class NumericalError(ArithmeticError):
    """An iterative kernel failed to reach its tolerance."""


class ConvergenceError(RuntimeError):
    """Newton iteration failed; ``report`` holds the iteration history."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
