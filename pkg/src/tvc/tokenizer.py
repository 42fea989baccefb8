"""Dual-output spatiotemporal tokenizer.

The encoder front end is one channel-stacked Haar level (2x on every
axis), followed by three strided causal conv blocks reaching 16x spatial
and 8x temporal reduction. Two heads hang off separate encoder stacks:

  * discrete: 6 raw channels, quantized by FSQ into the code map;
  * continuous: input is first pooled 2x spatially, the head applies a
    learnable per-channel gain and a smooth bound so the uniformly
    quantized latent always fits the entropy coder's symbol support.

Decoders mirror the encoders stage by stage; the discrete-path decoder is
also the main path of the fusion decoder, so its per-stage features are
exposed individually.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import fsq, wavelet
from .autodiff import Tensor
from .layers import (Conv3d, Module, avg_pool_spatial2x, soft_bound,
                     upsample_spatial2x, upsample_temporal_gop)


def check_gop(shape, continuous=True):
    """Validate (1+T, H, W, 3) clip extents."""
    if len(shape) != 4 or shape[3] != 3:
        raise ValueError(f"expected (1+T, H, W, 3) clip, got {shape}")
    t, h, w, _ = shape
    if t < 1 or (t - 1) % 8:
        raise ValueError(f"frame count {t} must be 1 + multiple of 8")
    if h % 16 or w % 16:
        raise ValueError(f"spatial extents {h}x{w} must be divisible by 16")
    if continuous and (h % 32 or w % 32):
        raise ValueError(f"spatial extents {h}x{w} must be divisible by 32 "
                         "for the continuous branch")


class EncoderStack(Module):
    """Wavelet level + three strided causal conv blocks + 1x1 head."""

    def __init__(self, widths, out_channels, rng, dtype=np.float32):
        w0, w1, w2 = widths
        self.conv1 = Conv3d(24, w0, (3, 3, 3), (2, 2, 2), rng, dtype)
        self.conv2 = Conv3d(w0, w1, (3, 3, 3), (2, 2, 2), rng, dtype)
        self.conv3 = Conv3d(w1, w2, (3, 3, 3), (1, 2, 2), rng, dtype)
        self.head = Conv3d(w2, out_channels, (1, 1, 1), (1, 1, 1), rng, dtype)

    def __call__(self, x):
        y = wavelet.gop_analysis(x)
        y = ad.gelu(self.conv1(y))
        y = ad.gelu(self.conv2(y))
        y = ad.gelu(self.conv3(y))
        return self.head(y)


class DecoderStack(Module):
    """Mirror of EncoderStack: 1x1 head, three upsampling conv blocks,
    inverse wavelet, sigmoid to [0,1]."""

    def __init__(self, widths, in_channels, rng, dtype=np.float32, base_channels=3):
        w0, w1, w2 = widths
        self.base_channels = base_channels
        self.head = Conv3d(in_channels, w2, (1, 1, 1), (1, 1, 1), rng, dtype)
        self.conv3 = Conv3d(w2, w1, (3, 3, 3), (1, 1, 1), rng, dtype)
        self.conv2 = Conv3d(w1, w0, (3, 3, 3), (1, 1, 1), rng, dtype)
        self.conv1 = Conv3d(w0, 8 * base_channels, (3, 3, 3), (1, 1, 1), rng, dtype)

    def stage0(self, x):
        return ad.gelu(self.head(x))

    def stage1(self, f):
        return ad.gelu(self.conv3(upsample_spatial2x(f)))

    def stage2(self, f):
        return ad.gelu(self.conv2(upsample_spatial2x(upsample_temporal_gop(f))))

    def stage3(self, f):
        return self.conv1(upsample_spatial2x(upsample_temporal_gop(f)))

    def finish(self, f):
        return ad.sigmoid(wavelet.gop_synthesis(f, self.base_channels))

    def __call__(self, x):
        return self.finish(self.stage3(self.stage2(self.stage1(self.stage0(x)))))


class Tokenizer(Module):
    def __init__(self, fsq_cfg: fsq.FsqConfig, widths=(32, 64, 64), cont_channels=16,
                 cont_bound=30.0, gain_init=8.0, rng=None, dtype=np.float32):
        self.fsq_cfg = fsq_cfg
        self.cont_bound = float(cont_bound)
        self.enc_d = EncoderStack(widths, fsq_cfg.channels, rng, dtype)
        self.enc_c = EncoderStack(widths, cont_channels, rng, dtype)
        self.log_gain = Tensor(np.full(cont_channels, np.log(gain_init), dtype=dtype),
                               requires_grad=True)
        self.dec_d = DecoderStack(widths, fsq_cfg.channels, rng, dtype)
        self.dec_c = DecoderStack(widths, cont_channels, rng, dtype)

    # --- encoding ---------------------------------------------------------

    def discrete_features(self, x):
        """Pre-quantization features on the (1+T/8, H/16, W/16, d_D) grid."""
        check_gop(x.shape, continuous=False)
        return self.enc_d(x)

    def encode_discrete(self, x):
        """-> (integer code map, pre-quantization feature Tensor)."""
        feats = self.discrete_features(x)
        codes = fsq.quantize(feats.data, self.fsq_cfg.levels)
        return codes, feats

    def encode_continuous(self, x):
        """-> bounded real latent on the (1+T/8, H/32, W/32, d_C) grid."""
        check_gop(x.shape)
        pooled = avg_pool_spatial2x(x)
        raw = self.enc_c(pooled)
        gained = ad.mul(raw, ad.exp(self.log_gain))
        return soft_bound(gained, self.cont_bound)

    # --- base decoding ------------------------------------------------------

    def decode_discrete(self, code_values):
        """Pixel decode from dequantized code values (Tensor, d_D channels)."""
        return self.dec_d(code_values)

    def decode_continuous(self, latent):
        """Pixel decode of the 2x-downsampled clip from the quantized latent."""
        return self.dec_c(latent)


def discrete_grid_shape(clip_shape):
    t, h, w, _ = clip_shape
    return (1 + (t - 1) // 8, h // 16, w // 16)


def continuous_grid_shape(clip_shape):
    t, h, w, _ = clip_shape
    return (1 + (t - 1) // 8, h // 32, w // 32)
