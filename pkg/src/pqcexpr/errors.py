"""Exception types raised across the toolkit."""


class PQCError(ValueError):
    """Base class for all toolkit errors."""


class ParameterArityError(PQCError):
    pass


class UnboundParameterError(PQCError):
    pass


class UnsupportedGateError(PQCError):
    pass


class CircuitValidationError(PQCError):
    pass


class CircuitParseError(PQCError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class SizeGuardError(PQCError):
    pass


class RoutingError(PQCError):
    pass


class ProfileError(PQCError):
    pass


class EncodingError(PQCError):
    pass


class DatasetError(PQCError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CheckpointError(PQCError):
    pass


class LibraryLookupError(PQCError, LookupError):
    pass
