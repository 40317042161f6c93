"""Multivariate generalized Pareto modeling with a Real NVP dependence
generator: density evaluation, likelihood fitting, sampling, tail-dependence
diagnostics, data-driven threshold selection and conditional risk measures.
"""

from .errors import (
    GPDFlowError,
    InputError,
    DataError,
    FormatError,
    DomainError,
    SupportError,
    NumericError,
    TrainingError,
)

__version__ = "0.1.0"

__all__ = [
    "GPDFlowError",
    "InputError",
    "DataError",
    "FormatError",
    "DomainError",
    "SupportError",
    "NumericError",
    "TrainingError",
    "__version__",
]
