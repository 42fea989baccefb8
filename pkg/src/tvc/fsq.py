"""Finite scalar quantization and the implicit mixed-radix codebook.

Each latent channel c is squashed through tanh, shifted to [0,1], scaled
by L_c - 1 and rounded (half away from zero) to an integer level. The
tuple of per-channel level counts implicitly defines a codebook of size
V = product(L_c); `code_to_index` packs a level tuple into its codebook
index little-endian (channel 0 is the least significant digit).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import round_half_away


@dataclass(frozen=True)
class FsqConfig:
    levels: tuple = (4, 4, 4, 4, 4, 4)

    def __post_init__(self):
        if any(l < 2 for l in self.levels):
            raise ValueError(f"every level count must be >= 2, got {self.levels}")

    @property
    def channels(self):
        return len(self.levels)

    @property
    def vocab_size(self):
        return int(np.prod(self.levels))


def quantize(z, levels):
    """Map raw per-channel reals (last axis) to integer levels.

    q_c = round(((tanh(z_c)+1)/2) * (L_c-1)), ties away from zero.
    """
    levels = np.asarray(levels, dtype=np.float64)
    if z.shape[-1] != levels.size:
        raise ValueError(f"latent channels {z.shape[-1]} != level count {levels.size}")
    bounded = np.tanh(np.asarray(z, dtype=np.float64))
    scaled = (bounded + 1.0) * 0.5 * (levels - 1.0)
    return round_half_away(scaled).astype(np.int64)


def dequantize(q, levels):
    """Level -> centroid in [-1, 1]: 2q/(L-1) - 1."""
    levels = np.asarray(levels, dtype=np.float64)
    return (2.0 * np.asarray(q, dtype=np.float64) / (levels - 1.0) - 1.0).astype(np.float32)


def quantize_ste(z, levels):
    """Differentiable FSQ: forward emits centroids, gradient passes through tanh."""
    bounded = ad.tanh(z)
    q = round_half_away((np.asarray(bounded.data, dtype=np.float64) + 1.0) * 0.5
                        * (np.asarray(levels, dtype=np.float64) - 1.0))
    centroid = (2.0 * q / (np.asarray(levels, dtype=np.float64) - 1.0) - 1.0)
    offset = centroid.astype(bounded.dtype) - bounded.data
    return ad.add(bounded, Tensor(offset.astype(bounded.dtype)))


def code_to_index(codes, cfg: FsqConfig):
    """Pack per-channel levels (last axis) into codebook indices."""
    codes = np.asarray(codes, dtype=np.int64)
    if codes.shape[-1] != cfg.channels:
        raise ValueError(f"expected {cfg.channels} channels, got {codes.shape[-1]}")
    levels = np.asarray(cfg.levels, dtype=np.int64)
    if (codes < 0).any() or (codes >= levels).any():
        raise ValueError("code entry outside its channel's level bound")
    radices = np.concatenate([[1], np.cumprod(levels[:-1])])
    return (codes * radices).sum(axis=-1)


def index_to_code(indices, cfg: FsqConfig):
    """Inverse of code_to_index; appends the channel axis."""
    indices = np.asarray(indices, dtype=np.int64)
    if (indices < 0).any() or (indices >= cfg.vocab_size).any():
        raise ValueError("codebook index out of range")
    levels = np.asarray(cfg.levels, dtype=np.int64)
    out = np.empty(indices.shape + (cfg.channels,), dtype=np.int64)
    rem = indices
    for c, l in enumerate(levels):
        out[..., c] = rem % l
        rem = rem // l
    return out
