"""Parameter containers and the small set of layers the codec is built from."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class Module:
    """Base class providing recursive named-parameter discovery.

    Attribute insertion order is deterministic, so `params()` yields a
    stable name -> Tensor mapping suitable for checkpoints and optimizers.
    """

    def params(self):
        out = {}
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            if isinstance(value, Tensor):
                out[name] = value
            elif isinstance(value, Module):
                for sub, t in value.params().items():
                    out[f"{name}.{sub}"] = t
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        for sub, t in item.params().items():
                            out[f"{name}.{i}.{sub}"] = t
        return out

    def set_trainable(self, flag):
        for t in self.params().values():
            t.requires_grad = flag


class Conv3d(Module):
    """Causal 3D convolution layer; see autodiff.conv3d_causal for semantics."""

    def __init__(self, cin, cout, kernel, stride=(1, 1, 1), rng=None, dtype=np.float32, zero_init=False):
        kt, kh, kw = kernel
        self.stride = stride
        fan_in = kt * kh * kw * cin
        if zero_init:
            w = np.zeros((kt, kh, kw, cin, cout), dtype=dtype)
        else:
            w = (rng.standard_normal((kt, kh, kw, cin, cout)) / np.sqrt(fan_in)).astype(dtype)
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True)

    def __call__(self, x):
        return ad.conv3d_causal(x, self.w, self.b, self.stride)


class Linear(Module):
    def __init__(self, nin, nout, rng=None, dtype=np.float32, zero_init=False):
        if zero_init:
            w = np.zeros((nin, nout), dtype=dtype)
        else:
            w = (rng.standard_normal((nin, nout)) / np.sqrt(nin)).astype(dtype)
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(np.zeros(nout, dtype=dtype), requires_grad=True)

    def __call__(self, x):
        return ad.add(ad.matmul(x, self.w), self.b)


class LayerNorm(Module):
    def __init__(self, dim, dtype=np.float32, eps=1e-5):
        self.gamma = Tensor(np.ones(dim, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)
        self.eps = eps

    def __call__(self, x):
        mu = ad.tmean(x, axis=-1, keepdims=True)
        centered = ad.sub(x, mu)
        var = ad.tmean(ad.mul(centered, centered), axis=-1, keepdims=True)
        inv = ad.power(ad.add(var, self.eps), -0.5)
        return ad.add(ad.mul(ad.mul(centered, inv), self.gamma), self.beta)


def round_half_away(a):
    """Deterministic round-half-away-from-zero on a plain array."""
    return np.sign(a) * np.floor(np.abs(a) + 0.5)


def ste_round(x):
    """Round to nearest (ties away from zero) with a straight-through gradient."""
    offset = round_half_away(x.data) - x.data
    return ad.add(x, Tensor(offset.astype(x.dtype)))


def soft_bound(x, bound):
    """Smooth clamp bound*tanh(x/bound); near-identity inside the bound."""
    return ad.mul(ad.tanh(ad.mul(x, 1.0 / bound)), bound)


def upsample_spatial2x(x):
    """Nearest-neighbor 2x upsampling of axes (1,2) of a (T,H,W,C) tensor."""
    return ad.repeat_axis(ad.repeat_axis(x, 2, 1), 2, 2)


def upsample_temporal_gop(x):
    """Causal temporal upsampling mapping length n to 2n-1.

    out[0] = in[0]; out[2k-1] = out[2k] = in[k]. Inverts the halving of a
    leading-frame-preserving downsampling chain (1+t -> 1+2t).
    """
    doubled = ad.repeat_axis(x, 2, 0)
    return ad.slice_axis(doubled, 0, 1, None)


def crop_spatial(x, h, w):
    return ad.slice_axis(ad.slice_axis(x, 1, 0, h), 2, 0, w)


def avg_pool_spatial2x(x):
    """2x spatial mean-pooling of a (T,H,W,C) tensor with even H,W."""
    t, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"avg_pool_spatial2x needs even extents, got {x.shape}")
    r = ad.reshape(x, (t, h // 2, 2, w // 2, 2, c))
    return ad.tmean(r, axis=(2, 4))
