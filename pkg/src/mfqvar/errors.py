"""Exception hierarchy.

Input/specification problems derive from :class:`InputError` (CLI exit code 2),
numerical and sampler failures from :class:`NumericalError` (exit code 3).
"""


class MfqvarError(Exception):
    """Base class for all package errors."""


class InputError(MfqvarError, ValueError):
    """Bad data, configuration or call arguments."""


class NumericalError(MfqvarError, ArithmeticError):
    """A numerical routine failed (factorization, sampler, target evaluation)."""


class ParameterDomainError(InputError):
    pass


class DataError(InputError):
    pass


class TransformationError(DataError):
    pass


class CalendarError(DataError):
    pass


class SettingsError(InputError):
    pass


class SpecError(InputError):
    pass


class StabilityError(InputError):
    pass


class ConstraintRankError(NumericalError):
    pass


class NotPositiveDefiniteError(NumericalError):
    """Cholesky factorization failed.

    ``index`` is the 1-based order of the leading minor that is not positive
    definite, as reported by LAPACK.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class SingularityError(NotPositiveDefiniteError):
    """Conditional precision of the missing cells is singular at ``cell``."""

    def __init__(self, message, index=None, cell=None):
        super().__init__(message, index)
        self.cell = cell


class TargetEvaluationError(NumericalError):
    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot


class SamplerError(NumericalError):
    """A Gibbs step failed; carries the iteration index and a state digest."""

    def __init__(self, message, iteration=None, digest=None):
        super().__init__(message)
        self.iteration = iteration
        self.digest = digest


class DegenerateChainError(InputError):
    """Too few draws for a meaningful diagnostic summary."""
