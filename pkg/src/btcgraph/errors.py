"""Exception types shared across the toolkit."""

from __future__ import annotations


class DecodeError(ValueError):
    """Raised when raw block bytes do not follow the wire format.

    Carries the byte offset at which decoding failed so corrupt records
    can be located in multi-gigabyte files.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class IngestError(ValueError):
    """Raised for malformed rows in CSV inputs; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver exhausts its iteration budget.

    The last iterate and its residual are attached so callers can inspect
    or resume the computation.
    """

    def __init__(self, message: str, residual: float, last=None):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual
        self.last = last
