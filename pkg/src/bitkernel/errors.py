"""Exception types shared across the package."""

from __future__ import annotations


class BitkernelError(Exception):
    """Base class for all package errors."""


class InvalidInputError(BitkernelError):
    """Non-finite, empty, or otherwise malformed numeric input."""


class DimensionError(BitkernelError):
    """Shapes or lengths of the operands do not match."""


class InvalidConfigError(BitkernelError):
    """A hyperparameter or configuration value violates its constraints."""


class DivergenceError(BitkernelError):
    """Training loss blew up; carries the step at which it happened."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class NumericalError(BitkernelError):
    """An iterative numerical routine failed to converge."""


class DomainError(BitkernelError):
    """Argument outside the mathematical domain of a special function."""


class PoleError(BitkernelError):
    """Argument sits on a pole of a special function."""


class ParseError(BitkernelError):
    """Malformed file or expression; carries a line number when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
