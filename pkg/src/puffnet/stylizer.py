"""Encoder-only stylizer: content-aware positions, cross-attention layers, CNN decoder."""

from __future__ import annotations

import numpy as np

from .attention import multi_head_attention
from .core import functional as F
from .core.module import Module, kaiming, ones, param, xavier, zeros
from .core.patches import PatchSequence, adaptive_pool_matrix, bilinear_matrix, grid_operator
from .core.rng import Rng
from .core.tensor import ShapeError, Tensor

OUT_EMBED_MODES = ("content", "style", "zero", "random")
RANDOM_EMBED_RANGE = 0.02


class Cape(Module):
    """Content-aware positional encoding: pool the token grid, mix channels, resample back."""

    def __init__(self, rng: Rng, dim: int, pool_grid: int = 18):
        self.pool_grid = pool_grid
        self.w_mix = xavier(rng.child("w_mix"), dim, dim)
        self.b_mix = zeros(dim)
        self._ops: dict[tuple[int, int], tuple[Tensor, Tensor]] = {}

    def operators(self, grid: tuple[int, int]) -> tuple[Tensor, Tensor]:
        if grid not in self._ops:
            gh, gw = grid
            s = self.pool_grid
            pool = grid_operator(adaptive_pool_matrix(gh, s), adaptive_pool_matrix(gw, s))
            back = grid_operator(bilinear_matrix(s, gh), bilinear_matrix(s, gw))
            self._ops[grid] = (pool, back)
        return self._ops[grid]


def cape(eps_c: PatchSequence, module: Cape) -> Tensor:
    gh, gw = eps_c.grid
    if gh < 1 or gw < 1:
        raise ShapeError(f"CAPE needs a non-empty grid, got {eps_c.grid}")
    pool, back = module.operators(eps_c.grid)
    b, length, c = eps_c.tokens.shape
    out = []
    for i in range(b):
        tokens = eps_c.tokens[i]
        pooled = F.matmul(pool, tokens, tag="cape")
        mixed = F.linear(pooled, module.w_mix, module.b_mix, tag="cape")
        out.append(F.reshape(F.matmul(back, mixed, tag="cape"), (1, length, c)))
    return out[0] if b == 1 else F.concat(out, axis=0)


def sinusoidal_pe(length: int, dim: int) -> Tensor:
    """Interleaved table: column 2i is sin, column 2i+1 is cos, at frequency 10000^(-2i/dim)."""
    if dim % 2:
        raise ValueError(f"sinusoidal encoding needs an even width, got {dim}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    freq = 10000.0 ** (-np.arange(0, dim, 2, dtype=np.float64) / dim)
    table = np.zeros((length, dim))
    table[:, 0::2] = np.sin(pos * freq)
    table[:, 1::2] = np.cos(pos * freq)
    return Tensor(table)


class EncoderLayer(Module):
    def __init__(self, rng: Rng, dim: int, heads: int, ffn_mult: int = 2):
        if dim % heads:
            raise ShapeError(f"width {dim} is not divisible by {heads} heads")
        self.heads = heads
        self.ln1_g, self.ln1_b = ones(dim), zeros(dim)
        self.wq = xavier(rng.child("wq"), dim, dim)
        self.wk = xavier(rng.child("wk"), dim, dim)
        self.wv = xavier(rng.child("wv"), dim, dim)
        self.wo = xavier(rng.child("wo"), dim, dim)
        self.ln2_g, self.ln2_b = ones(dim), zeros(dim)
        self.w1 = kaiming(rng.child("w1"), (dim, ffn_mult * dim), dim)
        self.b1 = zeros(ffn_mult * dim)
        self.w2 = xavier(rng.child("w2"), ffn_mult * dim, dim)
        self.b2 = zeros(dim)


def attention(stream: Tensor, eps_s: Tensor, layer: EncoderLayer, p_ca: Tensor,
              weights_out: list | None = None) -> Tensor:
    if stream.shape[-1] != eps_s.shape[-1]:
        raise ShapeError(f"stream width {stream.shape} does not match style tokens {eps_s.shape}")
    q_in = F.add(stream, p_ca)
    return multi_head_attention(q_in, eps_s, layer.wq, layer.wk, layer.wv, layer.wo,
                                layer.heads, weights_out)


def concat_self_attention(eps_c: Tensor, eps_s: Tensor, layer: EncoderLayer) -> Tensor:
    """Self-attention over the concatenated 2L sequence (the costlier alternative design)."""
    x = F.concat([eps_c, eps_s], axis=1)
    return multi_head_attention(x, x, layer.wq, layer.wk, layer.wv, layer.wo, layer.heads)


def encoder_layer(stream: Tensor, eps_s: Tensor, layer: EncoderLayer, p_ca: Tensor,
                  weights_out: list | None = None) -> Tensor:
    h = F.layer_norm(stream, layer.ln1_g, layer.ln1_b)
    y = F.add(attention(h, eps_s, layer, p_ca, weights_out), stream)
    h = F.layer_norm(y, layer.ln2_g, layer.ln2_b)
    h = F.linear(F.relu(F.linear(h, layer.w1, layer.b1)), layer.w2, layer.b2)
    return F.add(h, y)


class Decoder(Module):
    """Three (3x3 conv, relu, 2x upsample) stages, then a 3x3 conv to RGB."""

    def __init__(self, rng: Rng, dim: int, widths: tuple[int, int, int]):
        chans = (dim, *widths)
        self.weights = [kaiming(rng.child(f"w{i}"), (chans[i + 1], chans[i], 3, 3), chans[i] * 9)
                        for i in range(3)]
        self.biases = [zeros(w) for w in widths]
        self.w_out = kaiming(rng.child("w_out"), (3, widths[-1], 3, 3), widths[-1] * 9, gain=1.0)
        self.b_out = param(np.full(3, 0.5, dtype=np.float32))

    def __call__(self, tokens: Tensor, grid: tuple[int, int]) -> Tensor:
        b, _, c = tokens.shape
        x = F.reshape(F.transpose(tokens, (0, 2, 1)), (b, c, *grid))
        for w, bias in zip(self.weights, self.biases):
            x = F.upsample2x(F.relu(F.conv2d(x, w, bias)))
        return F.clamp(F.conv2d(x, self.w_out, self.b_out), 0.0, 1.0)


class Stylizer(Module):
    def __init__(self, rng: Rng, dim: int = 32, heads: int = 2, layers: int = 3, patch: int = 8,
                 ffn_mult: int = 2, pool_grid: int = 18, pe: str = "cape",
                 out_embed_mode: str = "content", decoder_widths: tuple[int, int, int] | None = None):
        if patch != 8:
            raise ValueError("the three 2x decoder stages assume 8x8 patches")
        if pe not in ("cape", "sinusoidal"):
            raise ValueError(f"unknown positional encoding {pe!r}")
        if out_embed_mode not in OUT_EMBED_MODES:
            raise ValueError(f"unknown output-embedding mode {out_embed_mode!r}")
        self.patch = patch
        self.pe = pe
        self.out_embed_mode = out_embed_mode
        self.proj = xavier(rng.child("proj"), 3 * patch * patch, dim)
        self.cape = Cape(rng.child("cape"), dim, pool_grid) if pe == "cape" else None
        self.layers = [EncoderLayer(rng.child(f"layer{i}"), dim, heads, ffn_mult) for i in range(layers)]
        widths = decoder_widths or (max(dim // 2, 8), max(dim // 4, 8), max(dim // 4, 8))
        self.decoder = Decoder(rng.child("decoder"), dim, widths)

    def positions(self, eps_c: PatchSequence) -> Tensor:
        if self.cape is not None:
            return cape(eps_c, self.cape)
        b, length, c = eps_c.tokens.shape
        table = sinusoidal_pe(length, c)
        return Tensor(np.broadcast_to(table.data, (b, length, c)))


def initial_output_embedding(mode: str, eps_c: Tensor, eps_s: Tensor, rng: Rng | None) -> Tensor:
    if mode == "content":
        return eps_c
    if mode == "style":
        if eps_s.shape != eps_c.shape:
            raise ShapeError("style-initialised output embedding needs equal content/style sizes")
        return eps_s
    if mode == "zero":
        return Tensor(np.zeros(eps_c.shape))
    if mode == "random":
        if rng is None:
            raise ValueError("out_embed_mode='random' needs a seeded Rng")
        return Tensor(rng.uniform(eps_c.shape, -RANDOM_EMBED_RANGE, RANDOM_EMBED_RANGE))
    raise ValueError(f"unknown output-embedding mode {mode!r}")


def attention_cost(length: int, dim: int, mode: str = "cross") -> dict[str, int]:
    """Closed-form MACs of one attention layer; ``quadratic`` is the score + value part."""
    if length < 1 or dim < 1:
        raise ValueError("length and width must be positive")
    if mode == "cross":
        n = length
    elif mode == "concat_self":
        n = 2 * length
    else:
        raise ValueError(f"unknown attention mode {mode!r}")
    quadratic = 2 * n * n * dim
    projections = 4 * n * dim * dim
    return {"quadratic": quadratic, "projections": projections, "total": quadratic + projections}

