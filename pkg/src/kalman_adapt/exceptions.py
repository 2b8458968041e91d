"""Exceptions raised by kalman_adapt."""


class KalmanAdaptException(Exception):
    """
    Base exception of the package.

    Parameters
    ----------
    message : str
        Human-readable description of the failure.
    step : int | None
        Index of the observation that failed, when raised from a filter loop.
    """

    def __init__(self, message: str, step: int | None = None):
        self.message = message
        self.step = step
        super().__init__(self.message)

    def at_step(self, step: int) -> 'KalmanAdaptException':
        """Return a copy of the exception tagged with the failing step index."""
        return type(self)(f"step {step}: {self.message}", step=step)


class NonPositiveDefinite(KalmanAdaptException):
    pass


class DimensionMismatch(KalmanAdaptException):
    pass


class SingularInnovation(KalmanAdaptException):
    pass


class NotDiagonal(KalmanAdaptException):
    pass


class WindowTooShort(KalmanAdaptException):
    pass


class LengthMismatch(KalmanAdaptException):
    pass


class MissingTruth(KalmanAdaptException):
    pass


class SingularSystem(KalmanAdaptException):
    pass


class InsufficientData(KalmanAdaptException):
    pass


class TraceIOError(KalmanAdaptException):
    pass


class ConfigInvalid(KalmanAdaptException):
    """Invalid run configuration; `field` holds the dotted name of the offending key."""

    def __init__(self, message: str, field: str | None = None, step: int | None = None):
        self.field = field
        if field is not None and not message.startswith(field):
            message = f"{field}: {message}"
        super().__init__(message, step=step)


def require(condition: bool, field: str, message: str) -> None:
    """Raise ConfigInvalid for `field` unless `condition` holds."""
    if not condition:
        raise ConfigInvalid(message, field=field)
