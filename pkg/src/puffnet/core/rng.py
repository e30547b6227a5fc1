from __future__ import annotations

import zlib

import numpy as np


class Rng:
    """Seeded generator that splits by name.

    ``Rng(seed).child("decoder.w0")`` always yields the same stream regardless of
    how many other children were drawn before it.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = int(seed)
        self.path = path
        ss = np.random.SeedSequence(self.seed, spawn_key=path)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, name: str | int) -> Rng:
        key = name if isinstance(name, int) else zlib.crc32(str(name).encode())
        return Rng(self.seed, self.path + (key,))

    def normal(self, shape, std: float = 1.0) -> np.ndarray:
        return (self._gen.standard_normal(shape) * std).astype(np.float32)

    def uniform(self, shape, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        return self._gen.uniform(lo, hi, shape).astype(np.float32)

    def integers(self, lo: int, hi: int) -> int:
        """Uniform integer in ``[lo, hi)``."""
        return int(self._gen.integers(lo, hi))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)
