"""Exception taxonomy shared across the package.

Every error raised by gpdflow derives from :class:`GPDFlowError` so callers
can catch one base class.  The command line maps subclasses onto exit codes:
usage problems exit 2, data and format problems exit 3, numerical failures
exit 4.
"""


class GPDFlowError(Exception):
    """Base class for all gpdflow errors."""


class InputError(GPDFlowError):
    """Invalid argument values or argument combinations."""


class DataError(GPDFlowError):
    """Input data violates a precondition (shape, sign, emptiness)."""


class FormatError(GPDFlowError):
    """A file on disk does not match the expected schema."""


class DomainError(GPDFlowError):
    """A point lies outside the domain of a transform."""


class SupportError(GPDFlowError):
    """A point lies outside the support of a density."""


class NumericError(GPDFlowError):
    """A numerical routine lost too much precision to continue."""


class TrainingError(GPDFlowError):
    """Optimization produced non-finite values and cannot proceed."""
