"""Error taxonomy; every error carries a machine-readable code."""

from __future__ import annotations


class BridgeError(Exception):
    """Base class; ``code`` is the stable machine-readable identifier."""

    @property
    def code(self) -> str:
        return type(self).__name__


class ModelUnavailable(BridgeError):
    """Requested pretrained weights cannot be obtained."""


class WeightShapeMismatch(BridgeError):
    """Donor weights do not have the expected tensor shapes."""


class NoImages(BridgeError):
    """Export directory contains no image files."""


class IoFailure(BridgeError):
    """Filesystem-level failure writing the output."""
