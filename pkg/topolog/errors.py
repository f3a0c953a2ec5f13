"""
Exception hierarchy for topolog.

Every error raised for bad input data or bad usage derives from TopologError;
the CLI maps those to exit code 2 and everything else to exit code 1.
"""

from pathlib import Path
from typing import Optional


class TopologError(Exception):
    """Base class for all data and usage errors."""


# ============================================================================
# Log parsing
# ============================================================================

class MalformedLine(TopologError, ValueError):
    """A JSONL line could not be parsed into an event record."""

    def __init__(self, line_no: int, reason: str = "invalid JSON"):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class MissingAttribute(TopologError, ValueError):
    """An event lacks an attribute required by its event type."""

    def __init__(self, event_type: str, name: str, line_no: Optional[int] = None):
        self.event_type = event_type
        self.name = name
        self.line_no = line_no
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{where}{event_type} event missing attribute '{name}'")


class NegativeTimestamp(TopologError, ValueError):
    """An event timestamp lies before the start of its run."""

    def __init__(self, line_no: int, value: float):
        self.line_no = line_no
        self.value = value
        super().__init__(f"line {line_no}: negative timestamp {value}")


class UnsortedEvents(TopologError, ValueError):
    """A run's events are not ordered by timestamp."""


class DatasetError(TopologError):
    """A dataset file could not be loaded; names the offending file."""

    def __init__(self, path: Path, cause: Exception):
        self.path = Path(path)
        self.cause = cause
        super().__init__(f"{self.path}: {cause}")


class EmptyRun(TopologError):
    """A run (or a run handed to a builder) has no events."""


class EmptyAfterFilter(TopologError):
    """A construction filter removed every event of a run."""


# ============================================================================
# Generation and numerics
# ============================================================================

class DegenerateConfig(TopologError):
    """A generator configuration cannot produce a valid dataset."""


class InvalidFiltration(TopologError):
    """A complex violates face closure or face monotonicity."""


class InvalidGrid(TopologError):
    """An image grid violates its invariants."""


class UnfittedGrid(TopologError):
    """A persistence image was requested before the grid was fitted."""


class NotSymmetric(TopologError):
    """A matrix handed to the symmetric eigensolver is not symmetric."""


# ============================================================================
# Classification
# ============================================================================

class InvalidFeatureMatrix(TopologError):
    """A feature matrix has ragged rows, mismatched labels or non-finite values."""


class RowMismatch(TopologError):
    """Two feature matrices do not describe the same runs in the same order."""


class SingleClass(TopologError):
    """A forest was asked to fit data containing a single class."""


class TooFewSamples(TopologError):
    """A class has fewer members than the number of folds."""


class Unfitted(TopologError):
    """A forest was queried before being fitted."""


class MissingFeatureFamily(TopologError):
    """A feature family needed by a command is absent from the input."""
