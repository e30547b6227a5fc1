"""Content and style extractors: image in, "pure" image out, same shape."""

from __future__ import annotations

import numpy as np

from .attention import multi_head_attention
from .core import functional as F
from .core.module import Module, kaiming, ones, param, xavier, zeros
from .core.patches import from_patches, patchify
from .core.rng import Rng
from .core.tensor import ShapeError, Tensor

LOG_SCALE_LIMIT = 5.0


class Bottleneck(Module):
    """Expand (1x1) -> relu -> 3x3 -> relu -> project (1x1), skip around the 3x3 stage.

    The projection starts at zero, so a fresh block maps everything to 0.
    """

    def __init__(self, rng: Rng, channels: int, expansion: int = 2):
        hidden = channels * expansion
        self.w_expand = kaiming(rng.child("w_expand"), (hidden, channels, 1, 1), channels)
        self.b_expand = zeros(hidden)
        self.w_mid = kaiming(rng.child("w_mid"), (hidden, hidden, 3, 3), hidden * 9)
        self.b_mid = zeros(hidden)
        self.w_project = zeros(channels, hidden, 1, 1)
        self.b_project = zeros(channels)

    def __call__(self, x: Tensor) -> Tensor:
        h = F.relu(F.conv2d(x, self.w_expand, self.b_expand))
        h = F.add(h, F.relu(F.conv2d(h, self.w_mid, self.b_mid)))
        return F.conv2d(h, self.w_project, self.b_project)


class InnBlock(Module):
    def __init__(self, rng: Rng, channels: int = 16):
        if channels % 2:
            raise ValueError("INN block needs an even channel count")
        self.split = channels // 2
        self.phi1 = Bottleneck(rng.child("phi1"), self.split)
        self.phi2 = Bottleneck(rng.child("phi2"), self.split)
        self.phi3 = Bottleneck(rng.child("phi3"), self.split)

    def log_scale(self, x: Tensor) -> Tensor:
        return F.clamp(self.phi2(x), -LOG_SCALE_LIMIT, LOG_SCALE_LIMIT)

    def randomize(self, rng: Rng, std: float = 0.1):
        """Overwrite every weight with N(0, std^2); used to exercise non-trivial couplings."""
        for name, t in self.named_tensors():
            t.data[...] = rng.child(name).normal(t.shape, std)


def inn_forward(y: Tensor, block: InnBlock) -> Tensor:
    c = block.split
    if y.ndim != 4 or y.shape[1] != 2 * c:
        raise ShapeError(f"INN block expects (B, {2 * c}, H, W), got {y.shape}")
    first, second = y[:, :c], y[:, c:]
    second = F.add(second, block.phi1(first))
    first = F.coupling(first, block.log_scale(second), block.phi3(second))
    return F.concat([first, second], axis=1)


def inn_inverse(y: Tensor, block: InnBlock) -> Tensor:
    c = block.split
    if y.ndim != 4 or y.shape[1] != 2 * c:
        raise ShapeError(f"INN block expects (B, {2 * c}, H, W), got {y.shape}")
    first, second = y[:, :c], y[:, c:]
    first = F.coupling(F.sub(first, block.phi3(second)),
                       F.mul(block.log_scale(second), -1.0),
                       Tensor(np.zeros(first.shape)))
    second = F.sub(second, block.phi1(first))
    return F.concat([first, second], axis=1)


class ContentExtractor(Module):
    """1x1 lift to ``channels`` -> INN blocks -> 1x1 drop back to RGB, clamped to [0, 1].

    ``drop`` starts as the pseudo-inverse of ``lift`` so a fresh extractor is the identity.
    """

    def __init__(self, rng: Rng, channels: int = 16, blocks: int = 2):
        lift = rng.child("lift").normal((channels, 3), 1.0)
        q, _ = np.linalg.qr(lift)
        self.w_lift = param(q.reshape(channels, 3, 1, 1))
        self.b_lift = zeros(channels)
        self.blocks = [InnBlock(rng.child(f"block{i}"), channels) for i in range(blocks)]
        self.w_drop = param(np.linalg.pinv(q).reshape(3, channels, 1, 1))
        self.b_drop = zeros(3)

    def __call__(self, img: Tensor) -> Tensor:
        return extract_content(img, self)


def extract_content(img: Tensor, ex: ContentExtractor) -> Tensor:
    y = F.conv2d(img, ex.w_lift, ex.b_lift)
    for block in ex.blocks:
        y = inn_forward(y, block)
    return F.clamp(F.conv2d(y, ex.w_drop, ex.b_drop), 0.0, 1.0)


class LTBlock(Module):
    """Pre-norm self-attention block whose feed-forward keeps the token width (no 4x expansion)."""

    def __init__(self, rng: Rng, dim: int, heads: int):
        self.heads = heads
        self.ln1_g, self.ln1_b = ones(dim), zeros(dim)
        self.wq = xavier(rng.child("wq"), dim, dim)
        self.wk = xavier(rng.child("wk"), dim, dim)
        self.wv = xavier(rng.child("wv"), dim, dim)
        self.wo = xavier(rng.child("wo"), dim, dim)
        self.ln2_g, self.ln2_b = ones(dim), zeros(dim)
        self.w1 = xavier(rng.child("w1"), dim, dim)
        self.b1 = zeros(dim)
        self.w2 = xavier(rng.child("w2"), dim, dim)
        self.b2 = zeros(dim)

    def ffn_param_count(self) -> int:
        return sum(t.size for t in (self.w1, self.b1, self.w2, self.b2))

    def __call__(self, x: Tensor, weights_out: list | None = None) -> Tensor:
        h = F.layer_norm(x, self.ln1_g, self.ln1_b)
        x = F.add(x, multi_head_attention(h, h, self.wq, self.wk, self.wv, self.wo,
                                          self.heads, weights_out))
        h = F.layer_norm(x, self.ln2_g, self.ln2_b)
        h = F.linear(F.relu(F.linear(h, self.w1, self.b1)), self.w2, self.b2)
        return F.add(x, h)


class StyleExtractor(Module):
    def __init__(self, rng: Rng, dim: int = 32, heads: int = 2, blocks: int = 2, patch: int = 8):
        self.patch = patch
        self.proj = xavier(rng.child("proj"), 3 * patch * patch, dim)
        self.blocks = [LTBlock(rng.child(f"block{i}"), dim, heads) for i in range(blocks)]
        self.unproj = param(np.linalg.pinv(self.proj.data))
        self.unproj_b = zeros(3 * patch * patch)

    def __call__(self, img: Tensor, weights_out: list | None = None) -> Tensor:
        return extract_style(img, self, weights_out)


def extract_style(img: Tensor, ex: StyleExtractor, weights_out: list | None = None) -> Tensor:
    seq = patchify(img, ex.patch, ex.proj)
    x = seq.tokens
    for block in ex.blocks:
        x = block(x, weights_out)
    rows = F.linear(x, ex.unproj, ex.unproj_b)
    return F.clamp(from_patches(rows, seq.grid, ex.patch), 0.0, 1.0)

