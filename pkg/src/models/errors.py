from typing import Optional


class EbpError(Exception):
    pass


class ConfigError(EbpError):
    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownModel(EbpError):
    pass


class InvalidPattern(EbpError):
    pass


class DegenerateFirstCrossing(EbpError):
    pass


class InfiniteMoment(EbpError):
    pass


class AssumptionViolation(EbpError):
    pass


class RejectionLimitExceeded(EbpError):
    pass


class NumericUnderflow(EbpError):
    pass


class CapExceeded(EbpError):
    pass


class MalformedPath(EbpError):
    pass


class InsufficientData(EbpError):
    pass


class SnapshotError(EbpError):
    pass
