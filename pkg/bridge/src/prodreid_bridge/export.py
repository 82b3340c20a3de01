"""Batch embedding export: directory of images -> PRID vector file."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import NoImages
from .models import LAYERS, MODELS, build
from .planes import load_rgb, model_input
from .prid import write_prid

IMAGE_SUFFIXES = frozenset(
    {".png", ".ppm", ".pgm", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".webp"}
)


@dataclass(frozen=True)
class ExtractorSpec:
    model: str = "alpha_alexnet"
    layer: str = "penultimate"
    side: int = 224
    batch_size: int = 8
    pretrained: str = "auto"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.layer not in LAYERS:
            raise ValueError(f"layer must be one of {LAYERS}, got {self.layer!r}")
        if self.side < 64:
            raise ValueError(f"side must be >= 64, got {self.side}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.pretrained not in ("auto", "require", "never"):
            raise ValueError(f"pretrained must be auto|require|never, got {self.pretrained!r}")

    @property
    def channels(self) -> int:
        return 9 if self.model == "alpha_alexnet" else 3


def iter_image_files(root: Path) -> list[tuple[str, Path]]:
    """(class_label, file) pairs under <label>/<images>, sorted."""
    pairs: list[tuple[str, Path]] = []
    root = Path(root)
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        files = sorted(
            p
            for p in class_dir.rglob("*")
            if p.is_file()
            and p.suffix.lower() in IMAGE_SUFFIXES
            and not p.name.startswith(".")
        )
        pairs.extend((class_dir.name, p) for p in files)
    return pairs


def _unit_rows(batch: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(batch.astype(np.float64), axis=1)
    norms[norms == 0] = 1.0
    return (batch.astype(np.float64) / norms[:, None]).astype(np.float32)


def extract_vectors(model: torch.nn.Module, spec: ExtractorSpec, paths: list[Path]) -> np.ndarray:
    """Unit-L2 float32 embedding per image, in input order."""
    out: list[np.ndarray] = []
    with torch.no_grad():
        for start in range(0, len(paths), spec.batch_size):
            chunk = paths[start : start + spec.batch_size]
            arrays = [model_input(load_rgb(p, spec.side), spec.channels) for p in chunk]
            batch = torch.from_numpy(np.stack(arrays))
            out.append(model(batch).numpy())
    return _unit_rows(np.concatenate(out))


def export(image_dir, spec: ExtractorSpec, out_path) -> dict:
    """Embed every image under image_dir and write one PRID file.

    Record ids are paths relative to image_dir (posix form); labels are the
    class directory names; the header dim is the tap layer's width.
    """
    root = Path(image_dir)
    pairs = iter_image_files(root)
    if not pairs:
        raise NoImages(f"no image files under {root}")
    model = build(spec.model, layer=spec.layer, pretrained=spec.pretrained)
    vectors = extract_vectors(model, spec, [p for _, p in pairs])
    assert vectors.shape == (len(pairs), model.dim)
    records = [
        (path.relative_to(root).as_posix(), label, vectors[i])
        for i, (label, path) in enumerate(pairs)
    ]
    write_prid(out_path, records, dim=model.dim)
    return {
        "path": str(out_path),
        "records": len(records),
        "classes": len({label for label, _ in pairs}),
        "dim": model.dim,
        "model": spec.model,
        "layer": spec.layer,
    }
