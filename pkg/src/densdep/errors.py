"""Exception types raised across the package."""


class DensDepError(Exception):
    """Base class for all package errors."""


class Diverged(DensDepError):
    """A latent state left the numerically safe range."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class CapacityUndefinedForNull(DensDepError):
    pass


class RejectionBudgetExceeded(DensDepError):
    def __init__(self, message, bank=None):
        super().__init__(message)
        self.bank = bank


class InsufficientWarmup(DensDepError):
    pass


class IngestError(DensDepError):
    """Malformed or invalid survey input; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class GapYears(IngestError):
    pass


class SingularCovariance(DensDepError):
    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number
