"""Quantized probability tables consumed by the range coder.

Every table carries 16-bit cumulative frequencies: total mass exactly
2^16, every symbol mass >= 1 (codability floor), largest-remainder
renormalization with ties broken toward lower indices. Construction is
elementwise float64 in a fixed evaluation order so identical inputs yield
identical tables everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, ndtr

PRECISION = 16
TOTAL = 1 << PRECISION
SIGMA_MIN = 1e-3
DEFAULT_SUPPORT = 64


@dataclass(frozen=True)
class QuantizedCdf:
    """Cumulative frequencies c_0 = 0 < c_1 < ... < c_S = 2^16."""

    cum: np.ndarray

    @property
    def size(self):
        return self.cum.shape[0] - 1

    def freq(self, s):
        return int(self.cum[s + 1] - self.cum[s])


def quantize_pmf_rows(pmf):
    """Quantize probability rows (n, S) to cumulative rows (n, S+1)."""
    pmf = np.asarray(pmf, dtype=np.float64)
    if pmf.ndim != 2:
        raise ValueError("expected a 2D batch of pmfs")
    n, s = pmf.shape
    if s < 1 or s > TOTAL // 2:
        raise ValueError(f"unsupported symbol count {s}")
    pmf = np.maximum(pmf, 0.0)
    sums = pmf.sum(axis=1, keepdims=True)
    pmf = np.where(sums > 0.0, pmf / np.where(sums > 0.0, sums, 1.0), 1.0 / s)

    budget = TOTAL - s
    scaled = pmf * budget
    base = np.floor(scaled)
    frac = scaled - base
    short = (budget - base.sum(axis=1)).astype(np.int64)
    # largest-remainder distribution; stable sort keeps ties at lower index
    order = np.argsort(-frac, axis=1, kind="stable")
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.broadcast_to(np.arange(s), (n, s)).copy(), axis=1)
    freqs = base.astype(np.int64) + 1 + (rank < short[:, None])

    cum = np.zeros((n, s + 1), dtype=np.uint32)
    cum[:, 1:] = np.cumsum(freqs, axis=1)
    return cum


def quantize_pmf(pmf):
    return QuantizedCdf(quantize_pmf_rows(np.asarray(pmf)[None, :])[0])


def _interval_mass(inner_cdf):
    """Probabilities from interior CDF values, tails folded into the ends."""
    n = inner_cdf.shape[0]
    full = np.empty((n, inner_cdf.shape[1] + 2), dtype=np.float64)
    full[:, 0] = 0.0
    full[:, -1] = 1.0
    full[:, 1:-1] = inner_cdf
    return np.diff(full, axis=1)


def gaussian_cdf_rows(mu, sigma, support=DEFAULT_SUPPORT, delta=1.0):
    """Discretized Gaussian tables over symbols [-support .. support].

    p(k) is the Gaussian mass of ((k-1/2)delta, (k+1/2)delta]; the two
    extreme symbols absorb their unbounded tails. sigma is floored at
    SIGMA_MIN rather than rejected.
    """
    mu = np.asarray(mu, dtype=np.float64).ravel()
    sigma = np.maximum(np.asarray(sigma, dtype=np.float64).ravel(), SIGMA_MIN)
    bounds = (np.arange(-support + 0.5, support, 1.0) * delta)  # interior edges
    inner = ndtr((bounds[None, :] - mu[:, None]) / sigma[:, None])
    return quantize_pmf_rows(_interval_mass(inner))


def gaussian_cdf(mu, sigma, support=DEFAULT_SUPPORT, delta=1.0):
    return QuantizedCdf(gaussian_cdf_rows([mu], [sigma], support, delta)[0])


def categorical_cdf_rows(logits):
    """Softmax-derived tables; logits (n, L)."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(logits).all():
        raise ValueError("non-finite logits")
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise ValueError("expected (n, L>=2) logits")
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return quantize_pmf_rows(e / e.sum(axis=1, keepdims=True))


def categorical_cdf(logits):
    return QuantizedCdf(categorical_cdf_rows(np.asarray(logits)[None, :])[0])


def logistic_cdf_rows(loc, scale, support=DEFAULT_SUPPORT, delta=1.0):
    """Discretized logistic tables (the factorized hyper-latent prior)."""
    loc = np.asarray(loc, dtype=np.float64).ravel()
    scale = np.maximum(np.asarray(scale, dtype=np.float64).ravel(), SIGMA_MIN)
    bounds = (np.arange(-support + 0.5, support, 1.0) * delta)
    inner = expit((bounds[None, :] - loc[:, None]) / scale[:, None])
    return quantize_pmf_rows(_interval_mass(inner))


def logistic_cdf(loc, scale, support=DEFAULT_SUPPORT, delta=1.0):
    return QuantizedCdf(logistic_cdf_rows([loc], [scale], support, delta)[0])


# --- float-precision model bits (rate accounting, no coder quantization) ---


def gaussian_bits(symbols, mu, sigma, support=DEFAULT_SUPPORT, delta=1.0, floor=2.0**-40):
    """-log2 model mass of each integer symbol under the folded Gaussian."""
    symbols = np.asarray(symbols, dtype=np.float64).ravel()
    mu = np.asarray(mu, dtype=np.float64).ravel()
    sigma = np.maximum(np.asarray(sigma, dtype=np.float64).ravel(), SIGMA_MIN)
    upper = np.where(symbols >= support, np.inf, (symbols + 0.5) * delta)
    lower = np.where(symbols <= -support, -np.inf, (symbols - 0.5) * delta)
    p = ndtr((upper - mu) / sigma) - ndtr((lower - mu) / sigma)
    return -np.log2(np.maximum(p, floor))


def logistic_bits(symbols, loc, scale, support=DEFAULT_SUPPORT, delta=1.0, floor=2.0**-40):
    symbols = np.asarray(symbols, dtype=np.float64).ravel()
    loc = np.asarray(loc, dtype=np.float64).ravel()
    scale = np.maximum(np.asarray(scale, dtype=np.float64).ravel(), SIGMA_MIN)
    upper = np.where(symbols >= support, np.inf, (symbols + 0.5) * delta)
    lower = np.where(symbols <= -support, -np.inf, (symbols - 0.5) * delta)
    p = expit((upper - loc) / scale) - expit((lower - loc) / scale)
    return -np.log2(np.maximum(p, floor))


def categorical_bits(symbols, logits, floor=2.0**-40):
    logits = np.asarray(logits, dtype=np.float64)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    picked = logp[np.arange(len(symbols)), np.asarray(symbols, dtype=np.int64)]
    return -picked / np.log(2.0)
