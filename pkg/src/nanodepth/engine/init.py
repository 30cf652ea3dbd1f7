"""Seeded weight initialisation."""
from __future__ import annotations

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; the stream for a given seed is platform independent."""
    return np.random.default_rng(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))


def lecun_normal_init(shape, fan_in: int, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """I.i.d. N(0, 1/fan_in) samples, the init SELU self-normalisation assumes."""
    if fan_in < 1:
        raise ValueError(f"fan_in must be >= 1, got {fan_in}")
    w = rng.standard_normal(size=tuple(shape)) * np.sqrt(1.0 / fan_in)
    return w.astype(dtype)
