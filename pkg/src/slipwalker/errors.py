"""Exception types shared across the package."""


class WalkerError(Exception):
    """Base class for all slipwalker errors."""


class InvalidParameterError(WalkerError):
    """A physical or numerical parameter is outside its admissible domain."""


class GuardViolationError(WalkerError):
    """An impact map was applied to a state away from the switching surface."""


class OutOfDomainError(WalkerError):
    """A time or index outside the defined span was requested."""


class StepFailureError(WalkerError):
    """Newton iteration for an implicit step did not converge."""

    def __init__(self, message, residual_norm=None):
        super().__init__(message)
        self.residual_norm = residual_norm


class ZenoGuardError(WalkerError):
    """The impact-count cap was exceeded during a hybrid run."""


class EventLocationError(WalkerError):
    """Bisection failed to localize a guard crossing."""


class ConfigError(WalkerError):
    """A run configuration file or flag set could not be interpreted."""
