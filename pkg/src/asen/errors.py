class AsenError(Exception):
    """Base class for all package errors."""


class ConfigError(AsenError, ValueError):
    pass


class SchemaError(AsenError, ValueError):
    pass


class DataError(AsenError, ValueError):
    pass


class DimensionError(AsenError, ValueError):
    pass


class DegenerateIndexError(AsenError, ArithmeticError):
    """A vegetation index denominator vanished (or went non-positive)."""


class TrainingDivergedError(AsenError, FloatingPointError):
    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class MetricUndefinedError(AsenError, ArithmeticError):
    pass


class LeakGuardError(AsenError):
    """Evaluation was requested on data the model was fitted or tuned on."""
