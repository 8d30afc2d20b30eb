"""Exception hierarchy shared by all scanforest modules."""
from __future__ import annotations


class ScanForestError(Exception):
    """Base class for every error raised by this package."""


# dataset
class MissingColumnError(ScanForestError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class ParseFailureError(ScanForestError, ValueError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyDatasetError(ScanForestError, ValueError):
    pass


class AllRowsDroppedError(ScanForestError, ValueError):
    pass


class SingleClassRemainingError(ScanForestError, ValueError):
    pass


class DegenerateClassError(ScanForestError, ValueError):
    pass


class InsufficientClassSizeError(ScanForestError, ValueError):
    pass


# forest
class EmptyNodeError(ScanForestError, ValueError):
    pass


class MissingClassError(ScanForestError, ValueError):
    pass


class SingleClassDataError(ScanForestError, ValueError):
    pass


class DimensionMismatchError(ScanForestError, ValueError):
    pass


class ModelFormatError(ScanForestError, ValueError):
    pass


# tuning
class NoCandidatesError(ScanForestError, ValueError):
    pass


# metrics
class LengthMismatchError(ScanForestError, ValueError):
    pass


class EmptyInputError(ScanForestError, ValueError):
    pass


class EmptyMatrixError(ScanForestError, ValueError):
    pass


class NoMetadataError(ScanForestError, ValueError):
    pass


class ZeroVarianceError(ScanForestError, ArithmeticError):
    pass


# scangen
class UnsupportedCombinationError(ScanForestError, ValueError):
    pass


# reports
class ReportFormatError(ScanForestError, ValueError):
    pass
