"""Multi-head scaled dot-product attention shared by the style extractor and the encoder."""

from __future__ import annotations

import math

from .core import functional as F
from .core.tensor import ShapeError, Tensor


def split_heads(x: Tensor, heads: int) -> Tensor:
    b, length, c = x.shape
    return F.transpose(F.reshape(x, (b, length, heads, c // heads)), (0, 2, 1, 3))


def merge_heads(x: Tensor) -> Tensor:
    b, heads, length, d = x.shape
    return F.reshape(F.transpose(x, (0, 2, 1, 3)), (b, length, heads * d))


def multi_head_attention(q_in: Tensor, kv_in: Tensor, wq: Tensor, wk: Tensor, wv: Tensor,
                         wo: Tensor, heads: int, weights_out: list | None = None) -> Tensor:
    """Queries from ``q_in`` ``(B, L, C)``; keys and values from ``kv_in`` ``(B, L_s, C)``.

    MACs are tagged ``proj`` for the four projections, ``score`` for Q K^T and
    ``value`` for the attention-weighted sum. If ``weights_out`` is a list, the
    softmax weights ``(B, heads, L, L_s)`` are appended to it.
    """
    c = q_in.shape[-1]
    if kv_in.shape[-1] != c:
        raise ShapeError(f"attention width mismatch: queries {q_in.shape}, keys/values {kv_in.shape}")
    if c % heads:
        raise ShapeError(f"width {c} is not divisible by {heads} heads")
    d_head = c // heads
    q = split_heads(F.matmul(q_in, wq, tag="proj"), heads)
    k = split_heads(F.matmul(kv_in, wk, tag="proj"), heads)
    v = split_heads(F.matmul(kv_in, wv, tag="proj"), heads)
    scores = F.matmul(q, F.transpose(k, (0, 1, 3, 2)), tag="score")
    att = F.softmax(F.mul(scores, 1.0 / math.sqrt(d_head)))
    if weights_out is not None:
        weights_out.append(att.data)
    mixed = merge_heads(F.matmul(att, v, tag="value"))
    return F.matmul(mixed, wo, tag="proj")
