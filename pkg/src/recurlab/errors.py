"""Exception and warning types shared across recurlab."""


class RecurlabError(Exception):
    """Base class for all recurlab errors."""


class ConfigError(RecurlabError, ValueError):
    pass


class DomainError(RecurlabError, ValueError):
    pass


class RangeError(RecurlabError, ValueError):
    pass


class SingularMatrix(RecurlabError, ValueError):
    pass


class NumericalFailure(RecurlabError, ArithmeticError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UnsupportedExactPath(RecurlabError, TypeError):
    pass


class UnsupportedDimension(RecurlabError, ValueError):
    pass


class PrecisionExhausted(RecurlabError, ArithmeticError):
    def __init__(self, message, max_steps=None):
        super().__init__(message)
        self.max_steps = max_steps


class RefinementLimit(RecurlabError, ValueError):
    pass


class DegeneracyWarning(UserWarning):
    pass


class FeatureScaleWarning(UserWarning):
    pass
