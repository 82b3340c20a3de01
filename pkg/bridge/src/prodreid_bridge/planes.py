"""Nine-plane input construction matching the engine's channel order:
[R, G, B, 255-R, 255-G, 255-B, rot90(R), rot90(G), rot90(B)], with the
rotation one quarter turn counter-clockwise. Rotation requires square
input, so images are resized square before augmentation."""

from __future__ import annotations

import numpy as np
from PIL import Image


def load_rgb(path, side: int) -> np.ndarray:
    """Decode to uint8 RGB (composited on white where transparent) and
    resize to side x side."""
    with Image.open(path) as img:
        img.load()
        if img.mode in ("RGBA", "LA", "PA"):
            background = Image.new("RGBA", img.size, (255, 255, 255, 255))
            img = Image.alpha_composite(background, img.convert("RGBA")).convert("RGB")
        elif img.mode != "RGB":
            img = img.convert("RGB")
        img = img.resize((side, side), Image.BILINEAR)
        return np.asarray(img, dtype=np.uint8)


def nine_planes(rgb: np.ndarray) -> np.ndarray:
    """(H, W, 3) uint8 -> (9, H, W) float32 scaled to [0, 1]."""
    h, w, _ = rgb.shape
    if h != w:
        raise ValueError(f"augmentation needs a square image, got {h}x{w}")
    base = np.moveaxis(rgb, 2, 0)
    planes = np.concatenate(
        [base, 255 - base, np.rot90(base, k=1, axes=(1, 2))], axis=0
    )
    return np.ascontiguousarray(planes, dtype=np.float32) / 255.0


def model_input(rgb: np.ndarray, channels: int) -> np.ndarray:
    """(channels, H, W) float32 model input: 3 = plain RGB, 9 = full planes."""
    if channels == 9:
        return nine_planes(rgb)
    if channels == 3:
        return np.ascontiguousarray(np.moveaxis(rgb, 2, 0), dtype=np.float32) / 255.0
    raise ValueError(f"channels must be 3 or 9, got {channels}")
