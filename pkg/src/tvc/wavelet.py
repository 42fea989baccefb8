"""Orthonormal 3D Haar transforms.

Two entry points:

  * `forward`/`inverse`: the classic in-place Mallat layout (approximation
    block in the low-index corner, detail bands behind it), same element
    count as the input. Pairs map to ((a+b)/sqrt2, (a-b)/sqrt2).
  * `gop_analysis`/`gop_synthesis`: the tokenizer-facing variant that
    rearranges one level of subbands into channels, halving every axis.
    The temporal axis of a clip has length 1+T; the leading frame is held
    out of the temporal pairing by replicate-padding it, so its detail
    coefficients are exactly zero and the 1+T/2 causal structure survives.

Both directions are built from differentiable engine ops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import autodiff as ad

_SQRT_HALF = 1.0 / math.sqrt(2.0)


def _split_pairs(x, axis):
    """Return (even, odd) elements along `axis` (extent must be even)."""
    n = x.shape[axis]
    shape = list(x.shape)
    shape[axis:axis + 1] = [n // 2, 2]
    r = ad.reshape(x, tuple(shape))
    out_shape = list(x.shape)
    out_shape[axis] = n // 2
    even = ad.reshape(ad.slice_axis(r, axis + 1, 0, 1), tuple(out_shape))
    odd = ad.reshape(ad.slice_axis(r, axis + 1, 1, 2), tuple(out_shape))
    return even, odd


def _merge_pairs(even, odd, axis):
    """Interleave two tensors along `axis` (inverse of _split_pairs)."""
    shape = list(even.shape)
    shape.insert(axis + 1, 1)
    e = ad.reshape(even, tuple(shape))
    o = ad.reshape(odd, tuple(shape))
    stacked = ad.concat([e, o], axis=axis + 1)
    out_shape = list(even.shape)
    out_shape[axis] *= 2
    return ad.reshape(stacked, tuple(out_shape))


def _haar_fwd_axis(x, axis):
    even, odd = _split_pairs(x, axis)
    approx = ad.mul(ad.add(even, odd), _SQRT_HALF)
    detail = ad.mul(ad.sub(even, odd), _SQRT_HALF)
    return approx, detail


def _haar_inv_axis(approx, detail, axis):
    even = ad.mul(ad.add(approx, detail), _SQRT_HALF)
    odd = ad.mul(ad.sub(approx, detail), _SQRT_HALF)
    return _merge_pairs(even, odd, axis)


def _take_block(x, axes, extents):
    block = x
    for axis, n in zip(axes, extents):
        block = ad.slice_axis(block, axis, 0, n)
    return block


def _put_block(x, block, axes, extents):
    """Write `block` back into the low corner of `x` along `axes`."""
    out = block
    for axis, n in reversed(list(zip(axes, extents))):
        rest_shape_ok = x.shape[axis] > n
        # rebuild along this axis using the original tensor's tail region,
        # itself restricted to the already-merged extents of earlier axes
        tail = x
        for a2, n2 in zip(axes, extents):
            if a2 == axis:
                break
            tail = ad.slice_axis(tail, a2, 0, n2)
        if rest_shape_ok:
            tail = ad.slice_axis(tail, axis, n, None)
            out = ad.concat([out, tail], axis=axis)
    return out


def forward(x, axes=(0, 1, 2), levels=1):
    """Multi-level orthonormal Haar; in-place subband layout, same shape."""
    for axis in axes:
        if x.shape[axis] % (1 << levels):
            raise ValueError(
                f"axis {axis} extent {x.shape[axis]} not divisible by 2^{levels}"
            )
    out = x
    for level in range(levels):
        extents = [x.shape[a] >> level for a in axes]
        block = _take_block(out, axes, extents)
        for i, axis in enumerate(axes):
            approx, detail = _haar_fwd_axis(block, axis)
            block = ad.concat([approx, detail], axis=axis)
        out = _put_block(out, block, axes, extents)
    return out


def inverse(y, axes=(0, 1, 2), levels=1):
    """Exact inverse of `forward` with identical axes/levels."""
    for axis in axes:
        if y.shape[axis] % (1 << levels):
            raise ValueError(
                f"axis {axis} extent {y.shape[axis]} not divisible by 2^{levels}"
            )
    out = y
    for level in reversed(range(levels)):
        extents = [y.shape[a] >> level for a in axes]
        block = _take_block(out, axes, extents)
        for axis in reversed(axes):
            half = block.shape[axis] // 2
            approx = ad.slice_axis(block, axis, 0, half)
            detail = ad.slice_axis(block, axis, half, None)
            block = _haar_inv_axis(approx, detail, axis)
        out = _put_block(out, block, axes, extents)
    return out


@dataclass(frozen=True)
class WaveletStack:
    levels: int = 1
    axes: tuple = (0, 1, 2)

    def forward(self, x):
        return forward(x, self.axes, self.levels)

    def inverse(self, y):
        return inverse(y, self.axes, self.levels)


# --- tokenizer-facing channel-stacked variant -------------------------------


def gop_analysis(x):
    """One Haar level with subbands stacked into channels.

    x: (1+T, H, W, C) with T even (or zero), H and W even. Returns
    (1+T/2, H/2, W/2, 8C); channel order is (temporal approx | temporal
    detail) x (LL | LH | HL | HH) x C. Slot 0's temporal detail group is
    identically zero because the leading frame pairs with its own copy.
    """
    t, h, w, _ = x.shape
    if (t - 1) % 2 or h % 2 or w % 2:
        raise ValueError(f"gop_analysis needs (1+even, even, even) extents, got {x.shape}")
    padded = ad.concat([ad.slice_axis(x, 0, 0, 1), x], axis=0)
    ta, td = _haar_fwd_axis(padded, 0)
    groups = []
    for part in (ta, td):
        lo_h, hi_h = _haar_fwd_axis(part, 1)
        for sh in (lo_h, hi_h):
            lo_w, hi_w = _haar_fwd_axis(sh, 2)
            groups.extend([lo_w, hi_w])
    return ad.concat(groups, axis=3)


def gop_synthesis(y, channels):
    """Inverse of `gop_analysis`; `channels` is C of the original clip."""
    t2, h2, w2, c8 = y.shape
    if c8 != 8 * channels:
        raise ValueError(f"expected {8 * channels} channels, got {c8}")
    parts = []
    for i in range(8):
        parts.append(ad.slice_axis(y, 3, i * channels, (i + 1) * channels))
    temporal = []
    for base in (0, 4):
        lo_h = _haar_inv_axis(parts[base + 0], parts[base + 1], 2)
        hi_h = _haar_inv_axis(parts[base + 2], parts[base + 3], 2)
        temporal.append(_haar_inv_axis(lo_h, hi_h, 1))
    padded = _haar_inv_axis(temporal[0], temporal[1], 0)
    return ad.slice_axis(padded, 0, 1, None)
