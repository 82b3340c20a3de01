"""Deterministic synthetic bottle-image generator.

Stands in for the proprietary production dataset: each class is a bottle
silhouette (body plus narrower neck) in a base color, rendered on a
contrasting background, with a seeded per-image uniform color offset. Byte
output is a pure function of the dataset spec.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import IoFailure
from .imaging import ImageRGB, write_ppm

DEFAULT_CANVAS = (96, 128)  # width, height
DEFAULT_BACKGROUND = (0, 168, 0)

# 18 class names echoing the bottle-family naming of the evaluation grids.
DEFAULT_LABELS = (
    "babyblue01",
    "babyblue02",
    "beige01",
    "black",
    "blackcup",
    "blacktumbler",
    "blue",
    "lavender01",
    "red01",
    "red02",
    "silver",
    "white",
    "white01",
    "white02",
    "white03",
    "whitecup",
    "yellow02",
    "yellow03",
)

# Lattice palette over {30, 110, 190, 250}: any two classes differ by at
# least 60 in RGB Euclidean distance, and every color stays far from the
# green-screen background even under maximum jitter.
DEFAULT_COLORS = (
    (110, 190, 250),
    (30, 110, 250),
    (250, 190, 110),
    (30, 30, 30),
    (30, 30, 110),
    (110, 30, 30),
    (30, 110, 190),
    (190, 110, 250),
    (250, 30, 30),
    (190, 30, 110),
    (190, 190, 190),
    (250, 250, 250),
    (250, 250, 190),
    (190, 250, 250),
    (250, 190, 250),
    (190, 250, 190),
    (250, 250, 110),
    (190, 190, 30),
)


@dataclass(frozen=True)
class BottleShape:
    """Silhouette ratios: bottle height and body width relative to the
    canvas, neck width relative to the body."""

    height_ratio: float
    width_ratio: float
    neck_ratio: float

    def __post_init__(self):
        for name in ("height_ratio", "width_ratio", "neck_ratio"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must be in (0, 1], got {v}")


@dataclass(frozen=True)
class ClassSpec:
    label: str
    color: tuple[int, int, int]
    shape: BottleShape
    jitter: int

    def __post_init__(self):
        if not self.label:
            raise ValueError("class label must be nonempty")
        if not 0 <= self.jitter <= 64:
            raise ValueError(f"jitter amplitude must be in [0, 64], got {self.jitter}")
        if len(self.color) != 3 or not all(0 <= c <= 255 for c in self.color):
            raise ValueError(f"color must be an RGB triple in 0..255, got {self.color}")


@dataclass(frozen=True)
class DatasetSpec:
    classes: tuple[ClassSpec, ...]
    images_per_class: int
    seed: int
    canvas: tuple[int, int] = DEFAULT_CANVAS
    background: tuple[int, int, int] = DEFAULT_BACKGROUND

    def __post_init__(self):
        labels = [c.label for c in self.classes]
        if len(set(labels)) != len(labels):
            raise ValueError("class labels must be unique")
        if self.images_per_class < 1:
            raise ValueError("images_per_class must be >= 1")
        if self.canvas[0] < 8 or self.canvas[1] < 8:
            raise ValueError("canvas must be at least 8x8")


def _shape_for(i: int) -> BottleShape:
    return BottleShape(
        height_ratio=0.70 + 0.03 * (i % 7),
        width_ratio=0.32 + 0.04 * (i % 5),
        neck_ratio=0.30 + 0.06 * (i % 4),
    )


def default_classes(jitter: int = 12) -> tuple[ClassSpec, ...]:
    """The 18-class well-separated palette (pairwise RGB distance >= 60)."""
    return tuple(
        ClassSpec(label=lbl, color=col, shape=_shape_for(i), jitter=jitter)
        for i, (lbl, col) in enumerate(zip(DEFAULT_LABELS, DEFAULT_COLORS))
    )


def lookalike_classes(jitter: int = 8, pair_distance: int = 5) -> tuple[ClassSpec, ...]:
    """The default palette with white02/white03 collapsed into near-identical
    whites (same silhouette, colors ``pair_distance`` apart) to reproduce the
    close-color confusion regime; plain 'white' moves to a neutral gray so
    the injected pair is the only near-collision."""
    base = list(default_classes(jitter=jitter))
    by_label = {c.label: i for i, c in enumerate(base)}
    pair_shape = base[by_label["white02"]].shape
    base[by_label["white"]] = ClassSpec("white", (110, 110, 110), base[by_label["white"]].shape, jitter)
    base[by_label["white02"]] = ClassSpec("white02", (246, 246, 246), pair_shape, jitter)
    base[by_label["white03"]] = ClassSpec(
        "white03", (246, 246, 246 - pair_distance), pair_shape, jitter
    )
    return tuple(base)


def default_dataset_spec(
    seed: int, images_per_class: int = 22, jitter: int = 12, lookalikes: bool = False
) -> DatasetSpec:
    classes = lookalike_classes(jitter=jitter) if lookalikes else default_classes(jitter=jitter)
    return DatasetSpec(classes=classes, images_per_class=images_per_class, seed=seed)


def render_bottle(cls: ClassSpec, canvas: tuple[int, int], background, color_offset=(0, 0, 0)) -> ImageRGB:
    """Rasterize one bottle: centered body rectangle with a narrower neck on
    top, hard edges, flat fill of base color + per-channel offset."""
    w, h = canvas
    px = np.empty((h, w, 3), dtype=np.uint8)
    px[:, :] = background
    bottle_h = max(2, round(h * cls.shape.height_ratio))
    body_w = max(2, round(w * cls.shape.width_ratio))
    neck_w = max(1, round(body_w * cls.shape.neck_ratio))
    neck_h = bottle_h // 4
    body_h = bottle_h - neck_h
    bottom = h - (h - bottle_h) // 2
    fill = np.clip(np.asarray(cls.color, dtype=np.int64) + np.asarray(color_offset, dtype=np.int64), 0, 255)
    x0 = (w - body_w) // 2
    nx0 = (w - neck_w) // 2
    px[bottom - body_h : bottom, x0 : x0 + body_w] = fill
    px[bottom - bottle_h : bottom - body_h, nx0 : nx0 + neck_w] = fill
    return ImageRGB(px)


def _image_rng(spec: DatasetSpec, class_index: int, image_index: int) -> np.random.Generator:
    return np.random.default_rng([spec.seed, class_index, image_index])


def synthesize(spec: DatasetSpec, out_dir, fmt: str = "png") -> list[tuple[str, Path]]:
    """Write images_per_class files per class under out_dir/<label>/ and
    return (label, path) pairs in generation order. Identical spec and seed
    give byte-identical files."""
    if fmt not in ("png", "ppm"):
        raise ValueError(f"fmt must be 'png' or 'ppm', got {fmt!r}")
    root = Path(out_dir)
    produced = []
    for ci, cls in enumerate(spec.classes):
        class_dir = root / cls.label
        try:
            class_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise IoFailure(f"cannot create {class_dir}: {e}") from e
        for i in range(spec.images_per_class):
            rng = _image_rng(spec, ci, i)
            if cls.jitter > 0:
                offset = rng.integers(-cls.jitter, cls.jitter + 1, size=3)
            else:
                offset = (0, 0, 0)
            img = render_bottle(cls, spec.canvas, spec.background, offset)
            path = class_dir / f"{cls.label}_{i:03d}.{fmt}"
            try:
                if fmt == "ppm":
                    write_ppm(img, path)
                else:
                    Image.fromarray(np.asarray(img.pixels)).save(path, format="PNG")
            except OSError as e:
                raise IoFailure(f"cannot write {path}: {e}") from e
            produced.append((cls.label, path))
    return produced
