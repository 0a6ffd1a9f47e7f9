class MeanFieldError(RuntimeError):
    pass


class NonFiniteError(MeanFieldError):
    pass


class EmptyDomainError(MeanFieldError):
    pass


class DomainExceededError(MeanFieldError):
    pass


class LengthMismatchError(MeanFieldError):
    pass


class DimensionMismatchError(MeanFieldError):
    pass


class SizeExceededError(MeanFieldError):
    pass


class TooFewSamplesError(MeanFieldError):
    pass


class SingularCovarianceError(MeanFieldError):
    pass


class CallbackFailureError(MeanFieldError):
    pass


class QuadratureOverflowError(MeanFieldError):
    pass


class ExplosionError(MeanFieldError):
    pass


class FlowGridMismatchError(MeanFieldError):
    pass


class SingularDiffusionError(MeanFieldError):
    pass


class MissingIncrementsError(MeanFieldError):
    pass


class MissingDerivativeCallbacksError(MeanFieldError):
    pass


class NoConvergenceError(MeanFieldError):

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class NonPositiveTestFunctionError(MeanFieldError):
    pass


class ConfigInvalidError(MeanFieldError):

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class MissingManifestError(MeanFieldError):
    pass


class AssertionFailedError(MeanFieldError):
    pass


class InvariantViolationError(MeanFieldError):
    pass
