"""Typed error hierarchy shared by all pianoprobe modules.

Every failure surfaced by the library is a subclass of :class:`HarnessError`
so callers (and the CLI) can distinguish harness contract violations from
programming bugs. Error classes carry plain messages; machine-readable
details live in attributes where an operation promises them.
"""

from __future__ import annotations


class HarnessError(Exception):
    """Base class for all pianoprobe errors."""


# --- embedding store -------------------------------------------------------

class StoreIOError(HarnessError):
    """Byte sink/source failure while writing or reading an embedding file."""

    def __init__(self, message: str, byte_offset: int | None = None):
        super().__init__(message)
        self.byte_offset = byte_offset


class FormatError(HarnessError):
    """File does not look like an embedding file (bad magic, bad metadata)."""


class UnsupportedVersionError(FormatError):
    """Embedding file declares a version this reader does not understand."""


class CorruptionError(HarnessError):
    """Embedding file is structurally damaged (truncation, checksum mismatch)."""


class DataError(HarnessError):
    """Payload contains an invalid value; carries its (row, col) location."""

    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        super().__init__(message)
        self.row = row
        self.col = col


class MissingLayerError(HarnessError):
    """A requested encoder layer is not present in the inputs."""


class AlignmentError(HarnessError):
    """Inputs that must be aligned (frames, segment sets, ids) are not."""


# --- dataset ---------------------------------------------------------------

class SchemaError(HarnessError):
    """Label table is missing a required column or holds an unparseable cell."""


class LabelRangeError(HarnessError):
    """A target value falls outside [0, 1]; carries row index and column name."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class DuplicateError(HarnessError):
    """Duplicate (segment_id, rendition) key in a label table."""


class InfeasibleSplitError(HarnessError):
    """Requested fold count cannot be satisfied by the available pieces."""


class MissingRenditionError(HarnessError):
    """A rendition tag named by a split mode does not exist in the data."""


# --- numerics / training ---------------------------------------------------

class EmptyInputError(HarnessError):
    """An operation received an empty sequence where at least one row is required."""


class ContractError(HarnessError):
    """A precondition of an operation was violated (shapes, empty sets, caches)."""


class InsufficientBatchError(ContractError):
    """Batch too small for a batch-level statistic (CCC needs at least 2 rows)."""


class DivergenceError(HarnessError):
    """Training produced a non-finite loss or gradient; names the location."""


# --- statistics ------------------------------------------------------------

class DegenerateError(HarnessError):
    """A statistic is undefined on this input (zero variance, all-zero diffs)."""


class ZeroVarianceError(DegenerateError):
    """Paired differences have zero standard deviation; t is undefined."""


class DegenerateDimensionError(DegenerateError):
    """A target dimension has zero variance; R^2 is undefined for it."""


class DegeneracyError(DegenerateError):
    """Too many bootstrap resamples were degenerate to trust the interval."""


class SmallSampleError(HarnessError):
    """Sample too small for the normal-approximation regime of a test."""
