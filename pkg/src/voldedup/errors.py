"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class VoldedupError(Exception):
    """Base class for all engine errors."""


class DimensionMismatch(VoldedupError):
    """A vector's length does not match the declared dimension."""


class NonFiniteValue(VoldedupError):
    """A NaN or infinity appeared where finite data is required."""


class EmptySet(VoldedupError):
    """An embedding set with zero slices."""


class DuplicateCaseId(VoldedupError):
    """Two distinct items in one database claim the same case id."""


class EmbeddingFileError(VoldedupError):
    """Base for malformed embedding-file conditions."""


class BadMagic(EmbeddingFileError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersion(EmbeddingFileError):
    """File carries a format version this engine does not read."""


class TruncatedPayload(EmbeddingFileError):
    """Payload length disagrees with the header."""


class InvalidHeader(EmbeddingFileError):
    """Header fields violate the format invariants."""


class ParseError(VoldedupError):
    """Manifest line failed to parse; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class DegenerateOutput(VoldedupError):
    """A transform would produce an empty volume."""


class CodecError(VoldedupError):
    """Image codec failed to encode or decode a slice."""


class EmptyDatabase(VoldedupError):
    """An index was built from zero items."""


class DegenerateSet(VoldedupError):
    """A scored set without both a positive and a negative item."""


class MissingGroundTruth(VoldedupError):
    """A positive-labeled query lacks its ground-truth case id."""


class EmptyTask(VoldedupError):
    """A task with no cases cannot be split into buckets."""


class ConfigError(VoldedupError):
    """Experiment configuration is invalid."""


class DataError(VoldedupError):
    """Input data is missing or inconsistent."""
