class SlowManifoldError(Exception):
    """Base class for library errors."""


class DomainError(SlowManifoldError, ValueError):
    pass


class ConfigurationError(SlowManifoldError, ValueError):
    pass


class AlignmentError(SlowManifoldError, ValueError):
    """A time is not on the path grid."""


class SpanError(SlowManifoldError, ValueError):
    """A requested window lies outside the available path span."""


class ShapeError(SlowManifoldError, ValueError):
    pass


class ContractionError(SlowManifoldError):
    """Hypotheses do not certify a contraction; the solver refuses to run."""


class ConvergenceError(SlowManifoldError):
    def __init__(self, msg, residual=None, iterations=None):
        super().__init__(msg)
        self.residual = residual
        self.iterations = iterations


class DivergenceError(SlowManifoldError):
    def __init__(self, msg, time=None):
        super().__init__(msg)
        self.time = time


class ExtrapolationError(SlowManifoldError, ValueError):
    pass


class DerivativeError(SlowManifoldError):
    pass


class PartialResultError(SlowManifoldError):
    def __init__(self, msg, failures=None, partial=None):
        super().__init__(msg)
        self.failures = failures or []
        self.partial = partial
