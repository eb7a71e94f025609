"""Exceptions raised by the toolkit.

Every exception carries the exit code the command line interface returns
when it escapes a subcommand.
"""


class MDLError(Exception):
    exit_code = 1


class InvalidArgumentError(MDLError, ValueError):
    exit_code = 2


class ConfigError(InvalidArgumentError):
    """A configuration value is missing or malformed.

    Attributes:
        field: The name of the offending configuration field.
    """
    def __init__(self, field: str, message: str | None = None):
        super().__init__(message or f'Invalid value for {field}')
        self.field = field


class UnsupportedError(MDLError):
    exit_code = 2


class UnsupportedEvaluationError(UnsupportedError):
    """Exact evaluation was requested for a distribution or loss that has no
    finite table representation."""


class ContractViolationError(MDLError, RuntimeError):
    exit_code = 3


class ProtocolViolationError(ContractViolationError):
    """A partial-feedback learner received feedback for a set it did not announce."""


class OracleError(MDLError, RuntimeError):
    exit_code = 3


class ResourceLimitError(MDLError):
    exit_code = 4


class PartialResultError(MDLError):
    """A run stopped before completing all rounds.

    Attributes:
        result: The SolveResult accumulated up to the interruption.
    """
    exit_code = 4

    def __init__(self, message: str, result):
        super().__init__(message)
        self.result = result
