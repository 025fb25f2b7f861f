"""Exception hierarchy.

Input problems (bad files, bad arguments) derive from :class:`InputError`;
numerical failures of a fit derive from :class:`NumericalError`. The CLI maps
the former to exit code 2 and the latter to exit code 1.
"""


class InputError(ValueError):
    """Invalid input data or configuration."""


class ParseError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(InputError):
    pass


class NumericalError(RuntimeError):
    """A fit or estimator could not produce a trustworthy result."""


class SingularInformationError(NumericalError):
    def __init__(self, message, aliased=()):
        self.aliased = tuple(aliased)
        super().__init__(message)


class SeparationError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message, beta=None, score_norm=None, trace=()):
        self.beta = beta
        self.score_norm = score_norm
        self.trace = tuple(trace)
        super().__init__(message)


class PositivityError(NumericalError):
    pass


class BootstrapUnstableError(NumericalError):
    def __init__(self, message, n_failed, n_total, failures=()):
        self.n_failed = n_failed
        self.n_total = n_total
        self.failures = tuple(failures)
        super().__init__(message)
