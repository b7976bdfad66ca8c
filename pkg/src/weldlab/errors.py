"""Shared exception types."""


class ConfigError(ValueError):
    """Rejected parameter or inconsistent configuration."""


class NumericsError(RuntimeError):
    """Floating-point trouble: overflow, degenerate masses, non-finite values."""


class NonConvergenceError(NumericsError):
    """Iteration hit its cap before meeting tolerance.

    Carries the successive-difference history so callers can inspect the decay.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []
