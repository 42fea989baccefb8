"""Clip quality metrics: PSNR, single-scale SSIM, gradient-proxy score."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, no_grad
from .fusion import perceptual_proxy

PSNR_CAP_DB = 99.0
_MSE_FLOOR = 1e-10


def psnr(x, xh):
    """10*log10(1/MSE) for [0,1] clips, capped at 99 dB."""
    x = np.asarray(x, dtype=np.float64)
    xh = np.asarray(xh, dtype=np.float64)
    if x.shape != xh.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {xh.shape}")
    mse = float(np.mean((x - xh) ** 2))
    if mse < _MSE_FLOOR:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(1.0 / mse))


def _window_stats(img, win):
    view = np.lib.stride_tricks.sliding_window_view(img, (win, win))
    mu = view.mean(axis=(-1, -2))
    var = view.var(axis=(-1, -2))
    return view, mu, var


def ssim(x, xh, window=8):
    """Mean single-scale SSIM over frames and channels, 8x8 sliding windows."""
    x = np.asarray(x, dtype=np.float64)
    xh = np.asarray(xh, dtype=np.float64)
    if x.shape != xh.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {xh.shape}")
    if x.shape[1] < window or x.shape[2] < window:
        raise ValueError(f"frames smaller than the {window}x{window} window")
    c1 = 0.01**2
    c2 = 0.03**2
    scores = []
    for t in range(x.shape[0]):
        for ch in range(x.shape[3]):
            a = x[t, :, :, ch]
            b = xh[t, :, :, ch]
            va, mu_a, var_a = _window_stats(a, window)
            vb, mu_b, var_b = _window_stats(b, window)
            cov = (va * vb).mean(axis=(-1, -2)) - mu_a * mu_b
            num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
            den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
            scores.append((num / den).mean())
    return float(np.mean(scores))


def gradient_proxy(x, xh):
    """Numpy-facing wrapper for the perceptual proxy used in training."""
    with no_grad():
        return float(perceptual_proxy(Tensor(np.asarray(x, dtype=np.float32)),
                                      Tensor(np.asarray(xh, dtype=np.float32))).item())


def l1_distance(x, xh):
    return float(np.mean(np.abs(np.asarray(x, np.float64) - np.asarray(xh, np.float64))))
