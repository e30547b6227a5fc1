from __future__ import annotations

import math

import numpy as np

from .rng import Rng
from .tensor import Tensor


class Module:
    """Parameter container; tensors, child modules and lists of modules are discovered by attribute."""

    def named_tensors(self, prefix: str = ""):
        for key, val in vars(self).items():
            if key.startswith("_"):
                continue
            name = f"{prefix}{key}"
            if isinstance(val, Tensor):
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_tensors(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_tensors(f"{name}.{i}.")
                    elif isinstance(item, Tensor):
                        yield f"{name}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_tensors() if t.requires_grad]

    def set_trainable(self, flag: bool):
        for _, t in self.named_tensors():
            t.requires_grad = flag

    def zero_grad(self):
        for _, t in self.named_tensors():
            t.grad = None

    def num_params(self) -> int:
        return sum(t.size for _, t in self.named_tensors())


def param(data: np.ndarray, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def kaiming(rng: Rng, shape, fan_in: int, gain: float = math.sqrt(2.0)) -> Tensor:
    return param(rng.normal(shape, gain / math.sqrt(fan_in)))


def xavier(rng: Rng, fan_in: int, fan_out: int) -> Tensor:
    return param(rng.normal((fan_in, fan_out), math.sqrt(2.0 / (fan_in + fan_out))))


def zeros(*shape) -> Tensor:
    return param(np.zeros(shape, dtype=np.float32))


def ones(*shape) -> Tensor:
    return param(np.ones(shape, dtype=np.float32))
