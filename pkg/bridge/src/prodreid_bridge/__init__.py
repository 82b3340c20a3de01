"""Deep-CNN embedding exporter: pretrained VGG16, AlexNet, and a 9-channel
AlexNet variant, written to PRID vector files the re-identification
engine loads directly."""

from .errors import BridgeError, IoFailure, ModelUnavailable, NoImages, WeightShapeMismatch
from .export import ExtractorSpec, export, extract_vectors, iter_image_files
from .models import build, build_alpha_alexnet, build_backbone, widen_first_conv
from .prid import write_prid

__version__ = "0.1.0"

__all__ = [
    "BridgeError",
    "ExtractorSpec",
    "IoFailure",
    "ModelUnavailable",
    "NoImages",
    "WeightShapeMismatch",
    "build",
    "build_alpha_alexnet",
    "build_backbone",
    "export",
    "extract_vectors",
    "iter_image_files",
    "widen_first_conv",
    "write_prid",
]
