"""Exception hierarchy shared by every module."""


class AopOffloadError(Exception):
    """Base class for all package errors."""


class DomainError(AopOffloadError, ValueError):
    """An argument is outside the domain of the operation."""


class ConfigError(AopOffloadError, ValueError):
    """Invalid or inconsistent configuration."""


class ParseError(AopOffloadError, ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class AdmissionError(AopOffloadError):
    """A task was pushed onto a link or node that cannot admit it."""


class ConstraintError(AopOffloadError):
    """A decision violates a resource constraint."""


class InfeasibleError(AopOffloadError):
    """No feasible decision exists; ``binding`` names the constraints involved."""

    def __init__(self, message, binding=()):
        super().__init__(message)
        self.binding = tuple(binding)
