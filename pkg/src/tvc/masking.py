"""Token masks and the continuous-stream fill for masked positions.

Masks are defined on the flattened (row-major) discrete token grid and
reshaped back to 3D. The fixed inference mask reveals the first n_visible
positions of every mask interval, giving mask rate 1 - n_visible/interval
exactly. Training masks drop a uniformly random subset of positions at a
rate drawn from [0.5, 1.0).

Both coder sides rebuild the identical mask from header fields alone; no
mask bits ever enter the stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import autodiff as ad
from . import fsq
from .autodiff import Tensor
from .layers import Conv3d, Module


@dataclass(frozen=True)
class MaskSpec:
    mask_interval: int
    n_visible: int
    mode: str = "fixed"  # fixed | random
    seed: int = 0

    def __post_init__(self):
        if self.mask_interval < 1:
            raise ValueError("mask_interval must be positive")
        if not 0 <= self.n_visible <= self.mask_interval:
            raise ValueError(
                f"n_visible {self.n_visible} outside [0, {self.mask_interval}]"
            )
        if self.mode not in ("fixed", "random"):
            raise ValueError(f"unknown mask mode {self.mode!r}")

    @property
    def mask_rate(self) -> Fraction:
        return 1 - Fraction(self.n_visible, self.mask_interval)


def fixed_mask(spec: MaskSpec, grid_shape):
    """Binary visibility map: flattened position p is visible iff
    (p mod interval) < n_visible. A trailing partial interval follows the
    same rule."""
    if spec.mode != "fixed":
        raise ValueError("fixed_mask needs a fixed-mode spec")
    total = int(np.prod(grid_shape))
    if total < 1:
        raise ValueError("empty token grid")
    flat = (np.arange(total) % spec.mask_interval) < spec.n_visible
    return flat.reshape(grid_shape)


def random_mask(spec: MaskSpec, grid_shape, rate=None):
    """Training mask: mask a uniformly random subset of positions.

    The masked count is round(rate * N); rate defaults to a per-call draw
    from U[0.5, 1.0). Deterministic given spec.seed.
    """
    if spec.mode != "random":
        raise ValueError("random_mask needs a random-mode spec")
    total = int(np.prod(grid_shape))
    rng = np.random.default_rng(spec.seed)
    if rate is None:
        rate = rng.uniform(0.5, 1.0)
    n_masked = int(round(rate * total))
    visible = np.ones(total, dtype=bool)
    visible[rng.permutation(total)[:n_masked]] = False
    return visible.reshape(grid_shape)


class FillProjection(Module):
    """Learned 1x1x1 projection of upsampled continuous values (d_C -> d_D)."""

    def __init__(self, cont_channels, code_channels, rng, dtype=np.float32):
        self.proj = Conv3d(cont_channels, code_channels, (1, 1, 1), (1, 1, 1), rng, dtype)

    def __call__(self, cont_up):
        return self.proj(cont_up)


def fill_masked(codes, mask, cont_up, fill_proj: FillProjection, levels):
    """Token grid seen by the context model and the predictor.

    Visible positions carry the dequantized FSQ centroids of their codes;
    masked positions carry the projected continuous values. `cont_up`
    is the quantized continuous latent nearest-upsampled to the discrete
    grid (Tensor); `codes` may hold anything at masked positions.
    """
    if codes.shape[:3] != mask.shape:
        raise ValueError(f"codes grid {codes.shape[:3]} != mask grid {mask.shape}")
    if cont_up.shape[:3] != mask.shape:
        raise ValueError(f"continuous grid {cont_up.shape[:3]} != mask grid {mask.shape}")
    centroids = fsq.dequantize(np.where(mask[..., None], codes, 0), levels)
    vis = mask[..., None].astype(cont_up.dtype)
    projected = fill_proj(cont_up)
    return ad.add(
        Tensor(centroids.astype(np.dtype(cont_up.dtype)) * vis),
        ad.mul(projected, Tensor(1.0 - vis)),
    )
