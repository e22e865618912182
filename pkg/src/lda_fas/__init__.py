"""Multi-prototype live/spoof classification with prototype selection and few-shot adaptation."""

from ._kernels import BACKEND
from .errors import (
    ConfigurationError,
    ContractViolation,
    DegenerateInputError,
    LdaError,
    TrainingDivergedError,
    UndefinedRateError,
)

__version__ = "0.1.0"
