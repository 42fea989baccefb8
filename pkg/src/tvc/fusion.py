"""Multi-scale residual fusion decoder and the reconstruction loss.

The discrete-path decoder is the main path; a control path (a trainable
copy of the continuous-path decoder) runs in parallel and its per-stage
features are injected residually through zero-initialized 1x1x1
projections after a 2x spatial upsample. With the projections at zero the
fused output equals the discrete-only decode exactly.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .layers import Conv3d, Module, avg_pool_spatial2x, upsample_spatial2x
from .tokenizer import DecoderStack


class FusionDecoder(Module):
    def __init__(self, widths, cont_channels=16, rng=None, dtype=np.float32):
        w0, w1, w2 = widths
        self.control = DecoderStack(widths, cont_channels, rng, dtype)
        self.zc0 = Conv3d(w2, w2, (1, 1, 1), (1, 1, 1), rng, dtype, zero_init=True)
        self.zc1 = Conv3d(w1, w1, (1, 1, 1), (1, 1, 1), rng, dtype, zero_init=True)
        self.zc2 = Conv3d(w0, w0, (1, 1, 1), (1, 1, 1), rng, dtype, zero_init=True)
        self.zc3 = Conv3d(8 * 3, 8 * 3, (1, 1, 1), (1, 1, 1), rng, dtype, zero_init=True)

    def __call__(self, main: DecoderStack, code_values, cont_hat):
        """Fused pixel decode.

        code_values: dequantized complete code map (Tensor, d_D channels);
        cont_hat: dequantized continuous latent (Tensor, d_C channels).
        """
        f = main.stage0(code_values)
        g = self.control.stage0(cont_hat)
        f = ad.add(f, self.zc0(upsample_spatial2x(g)))
        f = main.stage1(f)
        g = self.control.stage1(g)
        f = ad.add(f, self.zc1(upsample_spatial2x(g)))
        f = main.stage2(f)
        g = self.control.stage2(g)
        f = ad.add(f, self.zc2(upsample_spatial2x(g)))
        f = main.stage3(f)
        g = self.control.stage3(g)
        f = ad.add(f, self.zc3(upsample_spatial2x(g)))
        return main.finish(f)


def spatial_gradients(x):
    """Forward differences along the two spatial axes of (T,H,W,C)."""
    h, w = x.shape[1], x.shape[2]
    gh = ad.sub(ad.slice_axis(x, 1, 1, h), ad.slice_axis(x, 1, 0, h - 1))
    gw = ad.sub(ad.slice_axis(x, 2, 1, w), ad.slice_axis(x, 2, 0, w - 1))
    return gh, gw


def perceptual_proxy(x, xh, levels=3):
    """Mean L1 between spatial-gradient fields over a dyadic pyramid.

    Zero exactly when the two clips' spatial gradients agree at every
    pyramid level; insensitive to constant offsets by construction.
    """
    total = None
    for level in range(levels):
        ghx, gwx = spatial_gradients(x)
        ghy, gwy = spatial_gradients(xh)
        term = ad.add(ad.tmean(ad.absolute(ad.sub(ghx, ghy))),
                      ad.tmean(ad.absolute(ad.sub(gwx, gwy))))
        total = term if total is None else ad.add(total, term)
        if level < levels - 1:
            x = avg_pool_spatial2x(x)
            xh = avg_pool_spatial2x(xh)
    return ad.mul(total, 1.0 / levels)


def pixel_loss(x, xh, l1_weight=1.0, perc_weight=4.0):
    """l1_weight * mean|x - xh| + perc_weight * gradient-proxy term."""
    if x.shape != xh.shape:
        raise ValueError(f"clip shapes differ: {x.shape} vs {xh.shape}")
    l1 = ad.tmean(ad.absolute(ad.sub(x, xh)))
    return ad.add(ad.mul(l1, l1_weight), ad.mul(perceptual_proxy(x, xh), perc_weight))
