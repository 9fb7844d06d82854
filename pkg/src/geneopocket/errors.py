"""Exception hierarchy shared by every module."""


class GeneoError(Exception):
    """Base class for all errors raised by geneopocket."""


class DomainError(GeneoError, ValueError):
    """An input is outside the domain of an operation."""


class ParseError(GeneoError, ValueError):
    """A text record could not be parsed.

    ``line`` is the 1-based line number of the offending record, or ``None``
    when the error is not tied to a single line.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OptimizationError(GeneoError, ArithmeticError):
    """Parameter fitting produced a non-finite objective."""
