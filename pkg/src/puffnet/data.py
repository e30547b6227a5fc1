"""Training pairs: directory sources, fixed pairs, random crops and synthetic fixtures."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .core.patches import resize_bilinear
from .core.rng import Rng
from .core.tensor import Tensor
from .imageio import load_png


def random_crop(img: np.ndarray, size: int, rng: Rng) -> np.ndarray:
    """Crop ``(3, H, W)`` to ``(3, size, size)``; images smaller than ``size`` are upscaled first."""
    _, h, w = img.shape
    if h < size or w < size:
        scale = size / min(h, w)
        h, w = max(size, math.ceil(h * scale)), max(size, math.ceil(w * scale))
        img = resize_bilinear(img, h, w)
    top = rng.integers(0, h - size + 1)
    left = rng.integers(0, w - size + 1)
    return np.ascontiguousarray(img[:, top:top + size, left:left + size])


class FixedPair:
    """Always yields the same (content, style) pair."""

    def __init__(self, content: np.ndarray, style: np.ndarray):
        self.content = Tensor(content[None])
        self.style = Tensor(style[None])

    def batch(self, t: int) -> tuple[Tensor, Tensor]:
        return self.content, self.style


class DirectoryPairs:
    """Cycles through two PNG directories with independent per-epoch shuffles.

    Everything is derived from ``(seed, t)``, so a resumed run sees the same pairs.
    """

    def __init__(self, content_dir, style_dir, crop: int, seed: int = 0):
        self.content_files = _pngs(content_dir)
        self.style_files = _pngs(style_dir)
        self.crop = crop
        self.rng = Rng(seed).child("data")
        self._cache: dict[Path, np.ndarray] = {}

    def _pick(self, files: list[Path], t: int, stream: str) -> Path:
        epoch, pos = divmod(t - 1, len(files))
        order = self.rng.child(stream).child(epoch).permutation(len(files))
        return files[order[pos]]

    def _load(self, path: Path) -> np.ndarray:
        if path not in self._cache:
            self._cache[path] = load_png(path)
        return self._cache[path]

    def batch(self, t: int) -> tuple[Tensor, Tensor]:
        crop_rng = self.rng.child("crop").child(t)
        c = random_crop(self._load(self._pick(self.content_files, t, "content")), self.crop,
                        crop_rng.child("content"))
        s = random_crop(self._load(self._pick(self.style_files, t, "style")), self.crop,
                        crop_rng.child("style"))
        return Tensor(c[None]), Tensor(s[None])


def _pngs(directory) -> list[Path]:
    files = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".png")
    if not files:
        raise FileNotFoundError(f"no PNG files in {directory}")
    return files


def synthetic_content(size: int = 64, seed: int = 0) -> np.ndarray:
    """Smooth shapes on a gradient background: large-scale structure, little texture."""
    rng = Rng(seed).child("synthetic_content")
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.stack([0.3 + 0.4 * xx, 0.3 + 0.4 * yy, 0.5 - 0.2 * xx * yy])
    for k in range(3):
        cy, cx = rng.uniform((2,), 0.2, 0.8)
        r = float(rng.uniform((), 0.1, 0.25))
        color = rng.uniform((3,), 0.0, 1.0)
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
        img[:, mask] = color[:, None]
    return img.astype(np.float32)


def synthetic_style(size: int = 64, seed: int = 0) -> np.ndarray:
    """High-frequency stripes and checks in a saturated palette."""
    rng = Rng(seed).child("synthetic_style")
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    freq = rng.uniform((3,), 0.2, 0.9)
    phase = rng.uniform((3,), 0.0, 2 * np.pi)
    img = np.stack([0.5 + 0.5 * np.sin(freq[i] * (xx + (i + 1) * yy) + phase[i]) for i in range(3)])
    checks = ((yy // 4 + xx // 4) % 2)[None]
    return (0.7 * img + 0.3 * checks).clip(0, 1).astype(np.float32)
