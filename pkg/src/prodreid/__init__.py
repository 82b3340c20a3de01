"""Product re-identification engine.

Pipeline: channel-augmented imaging -> per-plane color histograms ->
partitioned exact nearest-neighbor search -> open-set Known/NewCategory
decisions with enrollment. The frontdoor subpackage wraps it in a CLI
and a line-delimited JSON TCP service.
"""

from prodreid.errors import ProdReidError
from prodreid.features import ExtractorConfig, FeatureVector, extract, pipeline
from prodreid.imaging import AugmentedImage, ImageRGB, augment_channels, load_image
from prodreid.index import GallerySnapshot, SearchHit, knn_scan, load, save
from prodreid.plane import PlaneTopology, SearchRequest, SearchResponse, plane_search
from prodreid.reid import (
    KNOWN,
    NEW_CATEGORY,
    NoveltyThreshold,
    ReIDDecision,
    calibrate_threshold,
    decide,
    enroll,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentedImage",
    "ExtractorConfig",
    "FeatureVector",
    "GallerySnapshot",
    "ImageRGB",
    "KNOWN",
    "NEW_CATEGORY",
    "NoveltyThreshold",
    "PlaneTopology",
    "ProdReidError",
    "ReIDDecision",
    "SearchHit",
    "SearchRequest",
    "SearchResponse",
    "__version__",
    "augment_channels",
    "calibrate_threshold",
    "decide",
    "enroll",
    "extract",
    "knn_scan",
    "load",
    "load_image",
    "pipeline",
    "plane_search",
    "save",
]
