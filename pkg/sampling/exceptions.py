"""Error hierarchy of the sampling library.

Invalid parameters (thresholds, constants, counts) are reported with
Django's ``ValidationError``; the classes below cover everything that goes
wrong with data, state or files.
"""


class FairAnnError(Exception):
    """Base class for library errors."""


class DimensionMismatchError(FairAnnError, ValueError):
    """A point or query does not have the dataset's dimension."""

    def __init__(self, expected: int, actual: int):
        super().__init__(f"Dimension mismatch: expected {expected}, got {actual}.")
        self.expected = expected
        self.actual = actual


class RankOutOfRangeError(FairAnnError, IndexError):
    """A point id or rank lies outside [0, n)."""


class NotUnitNormError(FairAnnError, ValueError):
    """A vector handed to an inner-product structure is not unit length."""


class SketchMismatchError(FairAnnError):
    """Two distinct-count sketches were built from different hash families."""


class SamplerModeError(FairAnnError):
    """An operation was called on a sampler built in the wrong mode."""


class SegmentOutOfRangeError(FairAnnError, IndexError):
    """A segment index or segment count is invalid for the rank space."""


class InfeasibleInstanceError(FairAnnError):
    """A planted instance cannot be generated for the requested spec."""


class DatasetFormatError(FairAnnError):
    """Base class for dataset file problems."""


class MalformedHeaderError(DatasetFormatError):
    """The dataset header is missing or does not parse."""


class ShortFileError(DatasetFormatError):
    """The dataset file ends before the declared payload."""


class RowLengthError(DatasetFormatError):
    """A dataset row does not have the declared dimension."""
