"""Differentiable ops over :class:`Tensor`.

Only scalar-to-tensor broadcasting is allowed. Anything that needs a per-channel
bias (linear, conv2d, layer_norm) carries the bias inside the op instead.
"""

from __future__ import annotations

import numpy as np

from . import tensor as _t
from .tensor import (
    NonFiniteError,
    ShapeError,
    Tensor,
    as_tensor,
    make_result,
    record_macs,
)


def _is_scalar(t: Tensor) -> bool:
    return t.size == 1


def _check_same(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _unbroadcast(g: np.ndarray, t: Tensor) -> np.ndarray:
    if g.shape == t.shape:
        return g
    return np.asarray(g.sum(), dtype=_t.DTYPE).reshape(t.shape)


# -- elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "add")
    return make_result(a.data + b.data, (a, b),
                       lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "sub")
    return make_result(a.data - b.data, (a, b),
                       lambda g: (_unbroadcast(g, a), _unbroadcast(-g, b)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "mul")
    return make_result(a.data * b.data, (a, b),
                       lambda g: (_unbroadcast(g * b.data, a), _unbroadcast(g * a.data, b)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "div")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data

    def bw(g):
        return (_unbroadcast(g / b.data, a),
                _unbroadcast(-g * a.data / (b.data * b.data), b))

    return make_result(out, (a, b), bw)


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(x.data)
    return make_result(out, (x,), lambda g: (g * out,))


def square(x: Tensor) -> Tensor:
    return make_result(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result(np.where(mask, x.data, 0).astype(_t.DTYPE), (x,), lambda g: (g * mask,))


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    # gradient passes only strictly inside the interval
    mask = (x.data > lo) & (x.data < hi)
    return make_result(np.clip(x.data, lo, hi), (x,), lambda g: (g * mask,))


def coupling(x: Tensor, log_scale: Tensor, shift: Tensor) -> Tensor:
    """Affine coupling ``x * exp(log_scale) + shift``."""
    _check_same(x, log_scale, "coupling")
    _check_same(x, shift, "coupling")
    with np.errstate(over="ignore"):
        scale = np.exp(log_scale.data)
    out = x.data * scale + shift.data
    if not np.isfinite(out).all():
        raise NonFiniteError("coupling produced non-finite values (log-scale too large)")

    def bw(g):
        gx = g * scale
        return gx, gx * x.data, g

    return make_result(out, (x, log_scale, shift), bw)


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul, "div": div, "hadamard": mul}


def elementwise(a, b, kind: str, shift=None) -> Tensor:
    """Dispatch by name; ``hadamard-exp-affine`` computes ``a * exp(b) + shift``."""
    if kind == "hadamard-exp-affine":
        a = as_tensor(a)
        shift = Tensor(np.zeros(a.shape)) if shift is None else as_tensor(shift)
        return coupling(a, as_tensor(b), shift)
    try:
        return _ELEMENTWISE[kind](a, b)
    except KeyError:
        raise ValueError(f"unknown elementwise kind {kind!r}") from None


def check_finite(x: Tensor, what: str = "tensor") -> Tensor:
    if not np.isfinite(x.data).all():
        raise NonFiniteError(f"{what} contains non-finite values")
    return x


# -- reductions ----------------------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _norm_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape),)

    return make_result(out, (x,), bw)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    n = int(np.prod([x.shape[a] for a in axes]))
    out = x.data.mean(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / n, x.shape),)

    return make_result(out, (x,), bw)


def var(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    """Biased (divide-by-N) variance."""
    axes = _norm_axes(axis, x.ndim)
    n = int(np.prod([x.shape[a] for a in axes]))
    centered = x.data - x.data.mean(axis=axes, keepdims=True)
    out = (centered * centered).mean(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (g * centered * (2.0 / n),)

    return make_result(out, (x,), bw)


def mse(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mse: shape mismatch {a.shape} vs {b.shape}")
    diff = a.data - b.data
    out = np.asarray(np.mean(diff.astype(np.float64) ** 2), dtype=_t.DTYPE)
    n = diff.size

    def bw(g):
        ga = g * diff * (2.0 / n)
        return ga, -ga

    return make_result(out, (a, b), bw)


# -- shape ---------------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    return make_result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return make_result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def index(x: Tensor, idx) -> Tensor:
    """Basic (slice) indexing."""
    out = x.data[idx]

    def bw(g):
        gx = np.zeros(x.shape, dtype=_t.DTYPE)
        gx[idx] = g
        return (gx,)

    return make_result(out, (x,), bw)


def concat(xs: list[Tensor], axis: int = 0) -> Tensor:
    axis = axis % xs[0].ndim
    sizes = [t.shape[axis] for t in xs]
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_result(np.concatenate([t.data for t in xs], axis=axis), tuple(xs), bw)


# -- linear algebra ------------------------------------------------------------

def matmul(a: Tensor, b: Tensor, tag: str = "matmul") -> Tensor:
    """``(..., M, K) @ (K, N)`` or batched ``(..., M, K) @ (..., K, N)`` with equal batch dims."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    shared = b.ndim == 2
    if not shared and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch dims differ {a.shape} vs {b.shape}")
    m, k = a.shape[-2:]
    n = b.shape[-1]
    record_macs(tag, int(np.prod(a.shape[:-2], dtype=np.int64)) * m * k * n)
    out = a.data @ b.data

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        if shared:
            gb = a.data.reshape(-1, k).T @ g.reshape(-1, n)
        else:
            gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return make_result(out, (a, b), bw)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None, tag: str = "linear") -> Tensor:
    """``x @ w + b`` over the last axis; ``b`` has shape ``(N,)``."""
    y = matmul(x, w, tag=tag)
    if b is None:
        return y
    if b.shape != (w.shape[1],):
        raise ShapeError(f"linear: bias {b.shape} does not match weight {w.shape}")
    lead = tuple(range(y.ndim - 1))
    return make_result(y.data + b.data, (y, b), lambda g: (g, g.sum(axis=lead)))


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilised by row-max subtraction."""
    if x.shape[-1] < 1:
        raise ShapeError("softmax over an empty axis")
    if not np.isfinite(x.data).all():
        raise NonFiniteError("softmax input contains non-finite values")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return make_result(out, (x,), bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    c = x.shape[-1]
    if gain.shape != (c,) or bias.shape != (c,):
        raise ShapeError(f"layer_norm: affine params must have shape ({c},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data
    lead = tuple(range(x.ndim - 1))

    def bw(g):
        gxhat = g * gain.data
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make_result(out, (x, gain, bias), bw)


# -- spatial -------------------------------------------------------------------

def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1) -> Tensor:
    """NCHW convolution, square kernel of size 1 or 3, "same" padding ``k // 2``."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and weight, got {x.shape}, {w.shape}")
    bsz, cin, h, wd = x.shape
    cout, wcin, k, k2 = w.shape
    if wcin != cin:
        raise ShapeError(f"conv2d: input has {cin} channels, weight expects {wcin} ({w.shape})")
    if k != k2 or k not in (1, 3):
        raise ShapeError(f"conv2d: unsupported kernel {w.shape[2:]}")
    if stride not in (1, 2):
        raise ValueError(f"conv2d: unsupported stride {stride}")
    if b is not None and b.shape != (cout,):
        raise ShapeError(f"conv2d: bias {b.shape} does not match {cout} output channels")
    pad = k // 2
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    out = np.zeros((bsz, cout, ho, wo), dtype=_t.DTYPE)
    span_h, span_w = (ho - 1) * stride + 1, (wo - 1) * stride + 1
    for i in range(k):
        for j in range(k):
            patch = xp[:, :, i:i + span_h:stride, j:j + span_w:stride]
            out += np.einsum("oc,bchw->bohw", w.data[:, :, i, j], patch, optimize=True)
    if b is not None:
        out += b.data[None, :, None, None]

    def bw(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w.data)
        for i in range(k):
            for j in range(k):
                patch = xp[:, :, i:i + span_h:stride, j:j + span_w:stride]
                gw[:, :, i, j] = np.einsum("bohw,bchw->oc", g, patch, optimize=True)
                gxp[:, :, i:i + span_h:stride, j:j + span_w:stride] += np.einsum(
                    "oc,bohw->bchw", w.data[:, :, i, j], g, optimize=True)
        gx = gxp[:, :, pad:pad + h, pad:pad + wd] if pad else gxp
        gb = g.sum(axis=(0, 2, 3)) if b is not None else None
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w, b) if b is not None else (x, w)
    return make_result(out, parents, bw)


def avg_pool2(x: Tensor) -> Tensor:
    """2x2 average pooling with stride 2 (NCHW, even H and W)."""
    bsz, c, h, wd = x.shape
    if h % 2 or wd % 2:
        raise ShapeError(f"avg_pool2 needs even spatial dims, got {x.shape}")
    out = x.data.reshape(bsz, c, h // 2, 2, wd // 2, 2).mean(axis=(3, 5))

    def bw(g):
        return (np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25,)

    return make_result(out, (x,), bw)


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling (NCHW)."""
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)
    bsz, c, h, wd = x.shape

    def bw(g):
        return (g.reshape(bsz, c, h, 2, wd, 2).sum(axis=(3, 5)),)

    return make_result(out, (x,), bw)
