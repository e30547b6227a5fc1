"""Image <-> patch-token conversion and fixed resampling matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from . import tensor as _t
from .tensor import ShapeError, Tensor


@dataclass
class PatchSequence:
    """Tokens of shape ``(B, L, C)`` plus the patch grid they came from."""

    tokens: Tensor
    grid: tuple[int, int]

    @property
    def length(self) -> int:
        return self.grid[0] * self.grid[1]


def to_patches(img: Tensor, m: int) -> Tensor:
    """``(B, 3, H, W)`` -> ``(B, L, m*m*3)``; each row is one patch flattened as (row, col, channel)."""
    if img.ndim != 4:
        raise ShapeError(f"expected (B, C, H, W), got {img.shape}")
    b, c, h, w = img.shape
    if h % m or w % m:
        raise ShapeError(f"image size {h}x{w} is not divisible by patch size {m}")
    gh, gw = h // m, w // m
    x = F.reshape(img, (b, c, gh, m, gw, m))
    x = F.transpose(x, (0, 2, 4, 3, 5, 1))
    return F.reshape(x, (b, gh * gw, m * m * c))


def from_patches(rows: Tensor, grid: tuple[int, int], m: int, channels: int = 3) -> Tensor:
    b, length, d = rows.shape
    gh, gw = grid
    if length != gh * gw or d != m * m * channels:
        raise ShapeError(f"cannot fold {rows.shape} into a {gh}x{gw} grid of {m}x{m}x{channels} patches")
    x = F.reshape(rows, (b, gh, gw, m, m, channels))
    x = F.transpose(x, (0, 5, 1, 3, 2, 4))
    return F.reshape(x, (b, channels, gh * m, gw * m))


def patchify(img: Tensor, m: int, proj: Tensor) -> PatchSequence:
    rows = to_patches(img, m)
    if proj.shape[0] != rows.shape[-1]:
        raise ShapeError(f"projection {proj.shape} does not accept {rows.shape[-1]}-dim patches")
    _, _, h, w = img.shape
    return PatchSequence(F.matmul(rows, proj, tag="patch"), (h // m, w // m))


def unpatchify(rows: Tensor, grid: tuple[int, int], m: int) -> Tensor:
    return from_patches(rows, grid, m)


def adaptive_pool_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row ``i`` averages input bins ``[floor(i*n_in/n_out), ceil((i+1)*n_in/n_out))``."""
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        lo = (i * n_in) // n_out
        hi = -((-(i + 1) * n_in) // n_out)
        mat[i, lo:hi] = 1.0 / (hi - lo)
    return mat


def bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    """1-d linear interpolation with half-pixel centres (align_corners=False)."""
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    scale = n_in / n_out
    for i in range(n_out):
        src = min(max((i + 0.5) * scale - 0.5, 0.0), n_in - 1)
        lo = int(np.floor(src))
        hi = min(lo + 1, n_in - 1)
        frac = src - lo
        mat[i, lo] += 1.0 - frac
        mat[i, hi] += frac
    return mat


def grid_operator(rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Separable 2-d resampling as one matrix acting on row-major flattened grids."""
    return Tensor(np.kron(rows, cols).astype(_t.DTYPE))


def resize_bilinear(img: np.ndarray, h: int, w: int) -> np.ndarray:
    """Resize a ``(C, H, W)`` float array."""
    rh = bilinear_matrix(img.shape[1], h)
    rw = bilinear_matrix(img.shape[2], w)
    out = np.einsum("ih,chw,jw->cij", rh, img.astype(np.float64), rw)
    return out.astype(_t.DTYPE)
