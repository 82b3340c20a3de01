"""Histogram feature extraction over augmented image planes.

Each of the nine planes contributes one intensity histogram computed over
foreground pixels only; the concatenation is L2-normalized as a whole, so
relative plane energy is preserved. The resulting unit vectors are what the
index stores and searches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import imaging
from .errors import DimensionMismatch
from .imaging import AugmentedImage, Mask, N_PLANES

NORM_TOLERANCE = 1e-5


@dataclass(frozen=True)
class FeatureVector:
    """Labeled float32 descriptor; the currency of the whole system."""

    id: str
    label: str
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float32)
        if v.ndim != 1 or v.size < 1:
            raise ValueError(f"values must be a nonempty 1-D vector, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("vector components must all be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.size

    def with_identity(self, id: str | None = None, label: str | None = None) -> "FeatureVector":
        return FeatureVector(
            id=self.id if id is None else id,
            label=self.label if label is None else label,
            values=self.values,
        )


@dataclass(frozen=True)
class ExtractorConfig:
    """Knobs for the histogram extractor and its preprocessing."""

    bins: int = 16
    side: int = 224
    bg_tolerance: float = 40.0

    def __post_init__(self):
        if self.bins < 2:
            raise ValueError(f"bins must be >= 2, got {self.bins}")
        if self.side < 8:
            raise ValueError(f"side must be >= 8, got {self.side}")

    @property
    def dim(self) -> int:
        return N_PLANES * self.bins


def raw_histograms(img: AugmentedImage, mask: Mask, bins: int) -> np.ndarray:
    """Per-plane foreground histograms as an (9, bins) int64 array.

    Bin index is floor(v * bins / 256), computed in integer arithmetic.
    Planes 6-8 are the rotated image, so their foreground is the rotated
    mask; that keeps the vector a pure function of the (pixel, flag)
    multiset, independent of pixel positions.
    """
    fg = mask.flags
    fg_rot = np.rot90(fg, k=1)
    counts = np.empty((N_PLANES, bins), dtype=np.int64)
    for p in range(N_PLANES):
        vals = img.planes[p][fg_rot if p >= 6 else fg]
        idx = vals.astype(np.int64) * bins // 256
        counts[p] = np.bincount(idx, minlength=bins)
    return counts


def extract(img: AugmentedImage, mask: Mask, cfg: ExtractorConfig) -> FeatureVector:
    """Histogram the masked planes and L2-normalize the concatenation.

    With an empty foreground there is nothing to normalize, so the uniform
    vector (every component 1/sqrt(dim)) stands in; it keeps the pipeline
    alive on conveyor glitches while carrying no information.
    """
    imaging.require_same_shape(mask, img.side)
    dim = cfg.dim
    if mask.foreground_count == 0:
        values = np.full(dim, 1.0 / math.sqrt(dim), dtype=np.float32)
        return FeatureVector(id="", label="", values=values)
    counts = raw_histograms(img, mask, cfg.bins).reshape(-1).astype(np.float64)
    values = (counts / np.linalg.norm(counts)).astype(np.float32)
    return FeatureVector(id="", label="", values=values)


def pipeline(path, cfg: ExtractorConfig, id: str = "", label: str = "") -> FeatureVector:
    """load -> remove_background -> resize_square -> augment_channels -> extract."""
    img = imaging.load_image(path)
    img, mask = imaging.remove_background(img, cfg.bg_tolerance)
    img = imaging.resize_square(img, cfg.side)
    mask = imaging.resize_mask(mask, cfg.side)
    aug = imaging.augment_channels(img)
    return extract(aug, mask, cfg).with_identity(id=id, label=label)
