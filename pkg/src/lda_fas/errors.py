"""Exception types shared across the package."""


class LdaError(Exception):
    """Base class for all package errors."""


class ConfigurationError(LdaError, ValueError):
    """Invalid configuration, spec or missing required input."""


class ContractViolation(LdaError, ValueError):
    """An argument breaks a documented precondition (shape, range)."""


class DegenerateInputError(LdaError, ValueError):
    """Input is well-formed but numerically degenerate (e.g. zero mean)."""


class UndefinedRateError(LdaError, ValueError):
    """A rate needs both classes present and one is missing."""


class TrainingDivergedError(LdaError, RuntimeError):
    def __init__(self, epoch: int, step: int, value: float):
        self.epoch = epoch
        self.step = step
        self.value = value
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, step {step}")
