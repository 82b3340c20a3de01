"""Image loading, background removal, square resize, and channel augmentation.

The augmentation scheme turns an RGB image into nine planes: the original
channels, their per-channel inverses, and the channels rotated 90 degrees
counter-clockwise. Everything here is a pure function over immutable values.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import CorruptData, DimensionMismatch, MissingFile, NonSquareInput, UnsupportedFormat

# Plane layout of an AugmentedImage.
PLANE_ORDER = ("R", "G", "B", "Rinv", "Ginv", "Binv", "Rrot", "Grot", "Brot")
N_PLANES = 9


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ImageRGB:
    """Row-major 8-bit RGB raster, shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise ValueError(f"expected (h, w, 3) uint8 array, got {px.shape} {px.dtype}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        object.__setattr__(self, "pixels", _readonly(px))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class Mask:
    """Per-pixel foreground flags with the dimensions of the masked image."""

    flags: np.ndarray

    def __post_init__(self):
        if self.flags.ndim != 2 or self.flags.dtype != np.bool_:
            raise ValueError(f"expected (h, w) bool array, got {self.flags.shape} {self.flags.dtype}")
        object.__setattr__(self, "flags", _readonly(self.flags))

    @property
    def width(self) -> int:
        return self.flags.shape[1]

    @property
    def height(self) -> int:
        return self.flags.shape[0]

    @property
    def foreground_count(self) -> int:
        return int(self.flags.sum())


@dataclass(frozen=True)
class AugmentedImage:
    """Nine square planes: RGB, inverted RGB, and RGB rotated 90 degrees CCW.

    The constructor enforces the plane relations, so any instance in the
    system is a valid augmentation of its first three planes.
    """

    planes: np.ndarray

    def __post_init__(self):
        p = self.planes
        if p.ndim != 3 or p.shape[0] != N_PLANES or p.dtype != np.uint8:
            raise ValueError(f"expected ({N_PLANES}, s, s) uint8 array, got {p.shape} {p.dtype}")
        if p.shape[1] != p.shape[2]:
            raise ValueError("planes must be square")
        if not np.array_equal(p[3:6], 255 - p[0:3]):
            raise ValueError("planes 3-5 must be the inverse of planes 0-2")
        if not np.array_equal(p[6:9], np.rot90(p[0:3], k=1, axes=(1, 2))):
            raise ValueError("planes 6-8 must be planes 0-2 rotated 90 degrees CCW")
        object.__setattr__(self, "planes", _readonly(p))

    @property
    def side(self) -> int:
        return self.planes.shape[1]


def load_image(path) -> ImageRGB:
    """Decode a raster file into an ImageRGB.

    Binary PPM (P6) is parsed directly; anything else goes through Pillow.
    Source transparency is composited on white before the alpha channel is
    dropped.
    """
    p = Path(path)
    try:
        raw = p.read_bytes()
    except FileNotFoundError as e:
        raise MissingFile(str(p)) from e
    except IsADirectoryError as e:
        raise MissingFile(f"{p} is a directory") from e
    if raw[:2] == b"P6":
        return _parse_ppm(raw, str(p))
    return _decode_with_pillow(raw, str(p))


def _decode_with_pillow(raw: bytes, name: str) -> ImageRGB:
    try:
        img = Image.open(io.BytesIO(raw))
    except UnidentifiedImageError as e:
        raise UnsupportedFormat(f"{name}: not a recognized raster format") from e
    try:
        img.load()
    except (OSError, ValueError, SyntaxError) as e:
        raise CorruptData(f"{name}: {e}") from e
    if img.mode in ("RGBA", "LA", "PA") or (img.mode == "P" and "transparency" in img.info):
        rgba = img.convert("RGBA")
        white = Image.new("RGBA", rgba.size, (255, 255, 255, 255))
        img = Image.alpha_composite(white, rgba)
    rgb = img.convert("RGB")
    return ImageRGB(np.asarray(rgb, dtype=np.uint8))


def _parse_ppm(raw: bytes, name: str) -> ImageRGB:
    # P6 header: magic, width, height, maxval as whitespace-separated ASCII
    # tokens ('#' starts a comment), then a single whitespace byte and the
    # raw pixel payload.
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CorruptData(f"{name}: unterminated PPM header")
        fields.append(raw[start:pos])
    pos += 1  # the single whitespace byte after maxval
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError as e:
        raise CorruptData(f"{name}: non-numeric PPM header field") from e
    if width < 1 or height < 1:
        raise CorruptData(f"{name}: bad PPM dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedFormat(f"{name}: only 8-bit PPM supported, maxval={maxval}")
    need = width * height * 3
    payload = raw[pos : pos + need]
    if len(payload) < need:
        raise CorruptData(f"{name}: PPM payload short by {need - len(payload)} bytes")
    return ImageRGB(np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3))


def write_ppm(img: ImageRGB, path) -> None:
    """Write a binary PPM (P6)."""
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.pixels.tobytes())


def write_pgm(plane: np.ndarray, path) -> None:
    """Write one grayscale plane as binary PGM (P5)."""
    if plane.ndim != 2 or plane.dtype != np.uint8:
        raise ValueError("expected a 2-D uint8 plane")
    header = f"P5\n{plane.shape[1]} {plane.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + plane.tobytes())


def estimate_background(img: ImageRGB) -> np.ndarray:
    """Per-channel median of the 1-pixel image border, as float64 RGB."""
    px = img.pixels
    if img.height <= 2 or img.width <= 2:
        border = px.reshape(-1, 3)
    else:
        border = np.concatenate(
            [
                px[0, :, :],
                px[-1, :, :],
                px[1:-1, 0, :],
                px[1:-1, -1, :],
            ]
        )
    return np.median(border.astype(np.float64), axis=0)


def remove_background(img: ImageRGB, bg_tolerance: float) -> tuple[ImageRGB, Mask]:
    """Whiten pixels near the estimated background color and mask them out.

    A pixel is background when its Euclidean RGB distance to the border-median
    estimate is <= bg_tolerance. Background pixels become (255, 255, 255);
    foreground pixels pass through untouched. An all-background result is
    valid, not an error.
    """
    if not 0 <= bg_tolerance <= 441:
        raise ValueError(f"bg_tolerance must be in [0, 441], got {bg_tolerance}")
    bg = estimate_background(img)
    diff = img.pixels.astype(np.float64) - bg
    dist2 = (diff * diff).sum(axis=2)
    background = dist2 <= float(bg_tolerance) ** 2
    out = img.pixels.copy()
    out[background] = 255
    return ImageRGB(out), Mask(~background)


def _nearest_indices(dst: int, src: int) -> np.ndarray:
    # floor((i + 0.5) * src / dst) in exact integer arithmetic, so results
    # are identical on every platform.
    i = np.arange(dst, dtype=np.int64)
    return (2 * i + 1) * src // (2 * dst)


def resize_square(img: ImageRGB, side: int) -> ImageRGB:
    """Nearest-neighbor resample to side x side."""
    if side < 1:
        raise ValueError(f"side must be >= 1, got {side}")
    if img.width == side and img.height == side:
        return img
    rows = _nearest_indices(side, img.height)
    cols = _nearest_indices(side, img.width)
    return ImageRGB(img.pixels[np.ix_(rows, cols)])


def resize_mask(mask: Mask, side: int) -> Mask:
    """Resample a mask with the same nearest-neighbor rule as resize_square."""
    if side < 1:
        raise ValueError(f"side must be >= 1, got {side}")
    if mask.width == side and mask.height == side:
        return mask
    rows = _nearest_indices(side, mask.height)
    cols = _nearest_indices(side, mask.width)
    return Mask(mask.flags[np.ix_(rows, cols)])


def augment_channels(img: ImageRGB) -> AugmentedImage:
    """Build the 9-plane augmentation of a square image."""
    if img.width != img.height:
        raise NonSquareInput(f"augmentation needs a square image, got {img.width}x{img.height}")
    rgb = np.transpose(img.pixels, (2, 0, 1))
    planes = np.concatenate([rgb, 255 - rgb, np.rot90(rgb, k=1, axes=(1, 2))])
    return AugmentedImage(np.ascontiguousarray(planes))


def dump_planes(aug: AugmentedImage, out_dir, stem: str = "plane") -> list[Path]:
    """Debug dump: write the 9 planes as grayscale PGMs, in plane order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, tag in enumerate(PLANE_ORDER):
        p = out / f"{stem}_{k}_{tag}.pgm"
        write_pgm(aug.planes[k], p)
        paths.append(p)
    return paths


def require_same_shape(mask: Mask, side: int) -> None:
    if mask.width != side or mask.height != side:
        raise DimensionMismatch(f"mask is {mask.width}x{mask.height}, image side is {side}")
