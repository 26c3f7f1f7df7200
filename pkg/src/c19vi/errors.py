"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class C19VIError(Exception):
    """Base class for all package errors."""


class DataError(C19VIError, ValueError):
    """Input data is malformed, inconsistent, or out of range.

    ``path`` and ``line`` are filled in when the problem can be pinned to a
    location in an input file.
    """

    def __init__(self, message, path=None, line=None):
        self.path = None if path is None else str(path)
        self.line = line
        prefix = ""
        if self.path is not None:
            prefix = self.path
            if line is not None:
                prefix += f":{line}"
            prefix += ": "
        super().__init__(prefix + message)


class SelectionError(DataError):
    """Training-set selection cannot be satisfied (an extreme class is empty)."""


class ModelFormatError(DataError):
    """A persisted model file is malformed or has an unsupported version."""

    def __init__(self, message, path=None, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message, path=path)


class InvariantError(C19VIError, RuntimeError):
    """An internal consistency check failed; indicates a bug, not bad input."""
