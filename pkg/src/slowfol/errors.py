"""Exception hierarchy shared by all slowfol modules."""


class SlowfolError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(SlowfolError, ValueError):
    """Invalid configuration or solver input."""


class HypothesisError(ConfigError):
    """A system violates the standing spectral or Lipschitz hypotheses."""


class GridError(SlowfolError, ValueError):
    """Grids are incompatible or a requested window leaves the support."""


class NumericalError(SlowfolError, ArithmeticError):
    """Non-finite or overflowing state encountered during integration."""


class ContractionError(NumericalError):
    """Picard iteration failed to converge."""

    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals or [])


class NotOnFiberError(SlowfolError, ValueError):
    """Points supplied to a fiber check do not lie on a common fiber."""
