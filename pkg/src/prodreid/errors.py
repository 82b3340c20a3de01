"""Exception hierarchy shared across the engine.

Every error carries a stable machine-readable ``code`` so the CLI and the
wire service can emit it without string-matching exception text.
"""

from __future__ import annotations


class ProdReidError(Exception):
    """Base class for all engine errors."""

    code = "Error"


class MissingFile(ProdReidError):
    code = "MissingFile"


class UnsupportedFormat(ProdReidError):
    code = "UnsupportedFormat"


class CorruptData(ProdReidError):
    code = "CorruptData"


class NonSquareInput(ProdReidError):
    code = "NonSquareInput"


class DimensionMismatch(ProdReidError):
    code = "DimensionMismatch"


class DuplicateId(ProdReidError):
    code = "DuplicateId"


class UnknownId(ProdReidError):
    code = "UnknownId"


class IoFailure(ProdReidError):
    code = "IoFailure"


class BadMagic(ProdReidError):
    code = "BadMagic"


class VersionUnsupported(ProdReidError):
    code = "VersionUnsupported"


class TruncatedFile(ProdReidError):
    code = "TruncatedFile"


class UnsortedInput(ProdReidError):
    code = "UnsortedInput"


class UnsortedHits(ProdReidError):
    code = "UnsortedHits"


class InsufficientData(ProdReidError):
    code = "InsufficientData"


class ClassExists(ProdReidError):
    code = "ClassExists"


class EmptyMatrix(ProdReidError):
    code = "EmptyMatrix"


class ClassTooSmall(ProdReidError):
    code = "ClassTooSmall"


class NoImages(ProdReidError):
    code = "NoImages"


class BadRequest(ProdReidError):
    code = "BadRequest"
