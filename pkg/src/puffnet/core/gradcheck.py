from __future__ import annotations

from typing import Callable

import numpy as np

from .rng import Rng
from .tensor import Tensor, backward, no_grad


def grad_check(f: Callable[[], Tensor], params: list[Tensor], h: float = 1e-2,
               n_samples: int = 50, seed: int = 0, floor: float = 1e-3) -> float:
    """Largest relative error between backprop and central differences.

    Coordinates are sampled uniformly over all entries of ``params``. The relative
    error is ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps gradients that are
    zero up to round-off from dividing by nothing.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    for p in params:
        p.grad = None
    loss = f()
    backward(loss)
    analytic = [np.zeros(p.shape, np.float32) if p.grad is None else p.grad.copy() for p in params]

    sizes = np.array([p.size for p in params])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = Rng(seed).child("grad_check")
    n = min(n_samples, int(offsets[-1]))
    picks = rng.permutation(int(offsets[-1]))[:n]

    worst = 0.0
    with no_grad():
        for flat in picks:
            which = int(np.searchsorted(offsets, flat, side="right") - 1)
            idx = int(flat - offsets[which])
            p = params[which]
            view = p.data.reshape(-1)
            orig = view[idx]
            view[idx] = orig + h
            up = float(f().item())
            view[idx] = orig - h
            down = float(f().item())
            view[idx] = orig
            numeric = (up - down) / (2 * h)
            a = float(analytic[which].reshape(-1)[idx])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    return worst
