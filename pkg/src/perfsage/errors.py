"""Exception hierarchy shared by every perfsage module."""


class PerfsageError(Exception):
    """Base class for all errors raised by perfsage."""


class ParameterError(PerfsageError, ValueError):
    """A kernel parameter, schedule or shape lies outside its legal domain."""


class ExternalVariantError(PerfsageError):
    """An external (black-box) variant failed to launch or broke the protocol."""


class MeasurementError(PerfsageError):
    """Dataset assembly aborted; ``partial`` holds the samples gathered so far."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class TrainingDivergenceError(PerfsageError):
    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")
        self.epoch = epoch
        self.loss = loss


class FitError(PerfsageError):
    """Closed-form regression could not be solved."""


class SchemaMismatchError(PerfsageError, ValueError):
    """Feature names or lengths do not match what a model or dataset expects."""


class ModelLoadError(PerfsageError):
    pass


class DatasetLoadError(PerfsageError):
    pass


class MetricDomainError(PerfsageError, ValueError):
    """Metric inputs violate the metric's preconditions."""


class UnsupportedModelError(PerfsageError, TypeError):
    pass
