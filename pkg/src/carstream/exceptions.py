class ValidationError(ValueError):
    """Raised when an argument or configuration value violates its contract."""


class UntrainedModelError(RuntimeError):
    """Raised when predicting with an ensemble that has no members."""


class InsufficientDataError(ValueError):
    """Raised when a statistical test has too few usable observations."""
