from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .core.patches import resize_bilinear
from .core.tensor import Tensor


def load_png(path) -> np.ndarray:
    """Read an image as a ``(3, H, W)`` float32 array in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def quantize(img: np.ndarray) -> np.ndarray:
    """``(3, H, W)`` floats -> ``(H, W, 3)`` uint8 via round(255 * clamp)."""
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)


def save_png(path, img) -> Path:
    if isinstance(img, Tensor):
        img = img.data
    if img.ndim == 4:
        img = img[0]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(quantize(img), mode="RGB").save(path, format="PNG", optimize=False)
    return path


def round_to_multiple(img: np.ndarray, multiple: int = 8) -> np.ndarray:
    """Bilinearly resize so both sides are the nearest multiple of ``multiple`` (at least one)."""
    _, h, w = img.shape
    nh = max(multiple, int(round(h / multiple)) * multiple)
    nw = max(multiple, int(round(w / multiple)) * multiple)
    if (nh, nw) == (h, w):
        return img
    return resize_bilinear(img, nh, nw)


def as_batch(img: np.ndarray) -> Tensor:
    return Tensor(img[None])
