"""Decoder-only transformer reconstructing masked discrete tokens.

The filled token grid is re-encoded by a shallow causal conv stack (the
unified projection pass), flattened, and given factorized learnable
positional embeddings. Each block runs pre-norm self-attention over all
token positions, cross-attention whose keys/values come from the
quantized continuous latent, and an MLP. A linear head scores the full
implicit codebook; masked positions are filled with the argmax index
(lowest index wins ties), never touching decoded visible tokens.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import fsq
from .autodiff import Tensor
from .layers import Conv3d, LayerNorm, Linear, Module

LN2 = float(np.log(2.0))


def _multihead(q, k, v, heads):
    d = q.shape[1]
    dh = d // heads
    outs = []
    for h in range(heads):
        qs = ad.slice_axis(q, 1, h * dh, (h + 1) * dh)
        ks = ad.slice_axis(k, 1, h * dh, (h + 1) * dh)
        vs = ad.slice_axis(v, 1, h * dh, (h + 1) * dh)
        outs.append(ad.attention(qs, ks, vs))
    return ad.concat(outs, axis=1)


class TransformerBlock(Module):
    def __init__(self, d_model, heads, mlp_ratio, rng, dtype=np.float32):
        self.heads = heads
        self.ln_self = LayerNorm(d_model, dtype)
        self.wq = Linear(d_model, d_model, rng, dtype)
        self.wk = Linear(d_model, d_model, rng, dtype)
        self.wv = Linear(d_model, d_model, rng, dtype)
        self.wo = Linear(d_model, d_model, rng, dtype)
        self.ln_cross = LayerNorm(d_model, dtype)
        self.cq = Linear(d_model, d_model, rng, dtype)
        self.ck = Linear(d_model, d_model, rng, dtype)
        self.cv = Linear(d_model, d_model, rng, dtype)
        self.co = Linear(d_model, d_model, rng, dtype)
        self.ln_mlp = LayerNorm(d_model, dtype)
        self.m1 = Linear(d_model, mlp_ratio * d_model, rng, dtype)
        self.m2 = Linear(mlp_ratio * d_model, d_model, rng, dtype)

    def __call__(self, x, kv):
        h = self.ln_self(x)
        x = ad.add(x, self.wo(_multihead(self.wq(h), self.wk(h), self.wv(h), self.heads)))
        h = self.ln_cross(x)
        x = ad.add(x, self.co(_multihead(self.cq(h), self.ck(kv), self.cv(kv), self.heads)))
        h = self.ln_mlp(x)
        return ad.add(x, self.m2(ad.gelu(self.m1(h))))


class TokenPredictor(Module):
    def __init__(self, fsq_cfg: fsq.FsqConfig, cont_channels=16, d_model=128,
                 layers=4, heads=4, mlp_ratio=4, max_grid=(8, 16, 16),
                 rng=None, dtype=np.float32):
        if d_model % heads:
            raise ValueError(f"d_model {d_model} not divisible by heads {heads}")
        self.fsq_cfg = fsq_cfg
        self.d_model = d_model
        self.max_grid = tuple(max_grid)
        self.embed1 = Conv3d(fsq_cfg.channels, d_model // 2, (3, 3, 3), (1, 1, 1), rng, dtype)
        self.embed2 = Conv3d(d_model // 2, d_model, (3, 3, 3), (1, 1, 1), rng, dtype)

        def table(n):
            return Tensor((rng.standard_normal((n, d_model)) * 0.02).astype(dtype),
                          requires_grad=True)

        self.pos_t = table(max_grid[0])
        self.pos_h = table(max_grid[1])
        self.pos_w = table(max_grid[2])
        self.cpos_t = table(max_grid[0])
        self.cpos_h = table(max_grid[1])
        self.cpos_w = table(max_grid[2])
        self.cont_proj = Linear(cont_channels, d_model, rng, dtype)
        self.blocks = [TransformerBlock(d_model, heads, mlp_ratio, rng, dtype)
                       for _ in range(layers)]
        self.ln_out = LayerNorm(d_model, dtype)
        self.head = Linear(d_model, fsq_cfg.vocab_size, rng, dtype)

    def _positional(self, grid, tables):
        t, h, w = grid
        pt, ph, pw = tables
        if t > pt.shape[0] or h > ph.shape[0] or w > pw.shape[0]:
            raise ValueError(f"token grid {grid} exceeds positional tables "
                             f"({pt.shape[0]}, {ph.shape[0]}, {pw.shape[0]})")
        d = self.d_model
        a = ad.reshape(ad.slice_axis(pt, 0, 0, t), (t, 1, 1, d))
        b = ad.reshape(ad.slice_axis(ph, 0, 0, h), (1, h, 1, d))
        c = ad.reshape(ad.slice_axis(pw, 0, 0, w), (1, 1, w, d))
        return ad.add(ad.add(a, b), c)

    def embed_tokens(self, filled):
        """Filled token grid (T,H,W,d_D) -> sequence (N, d_model)."""
        t, h, w = filled.shape[:3]
        e = self.embed2(ad.gelu(self.embed1(filled)))
        e = ad.add(e, self._positional((t, h, w), (self.pos_t, self.pos_h, self.pos_w)))
        return ad.reshape(e, (t * h * w, self.d_model))

    def continuous_tokens(self, cont_hat, add_positions=True):
        """Quantized continuous grid (Tc,Hc,Wc,d_C) -> K/V sequence (M, d)."""
        t, h, w, c = cont_hat.shape
        flat = ad.reshape(cont_hat, (t * h * w, c))
        kv = self.cont_proj(flat)
        if add_positions:
            pos = self._positional((t, h, w), (self.cpos_t, self.cpos_h, self.cpos_w))
            kv = ad.add(kv, ad.reshape(pos, (t * h * w, self.d_model)))
        return kv

    def __call__(self, filled, cont_hat):
        """-> logits (Ntokens, vocab_size)."""
        x = self.embed_tokens(filled)
        kv = self.continuous_tokens(cont_hat)
        for block in self.blocks:
            x = block(x, kv)
        logits = self.head(self.ln_out(x))
        if not np.isfinite(logits.data).all():
            raise ValueError("non-finite predictor activations")
        return logits


def nll_masked(logits, truth_indices, visible_flat):
    """Mean negative log-likelihood over masked positions, in bits.

    Natural-log internally; an empty masked set is defined as 0.
    """
    visible_flat = np.asarray(visible_flat, dtype=bool).ravel()
    masked = ~visible_flat
    m = int(masked.sum())
    dtype = np.dtype(logits.dtype)
    if m == 0:
        return Tensor(np.zeros((), dtype=dtype))
    n, v = logits.shape
    weights = np.zeros((n, v), dtype=dtype)
    rows = np.nonzero(masked)[0]
    weights[rows, np.asarray(truth_indices).ravel()[rows]] = 1.0 / m
    logp = ad.log_softmax(logits, axis=-1)
    nats = ad.mul(ad.tsum(ad.mul(logp, Tensor(weights))), -1.0)
    return ad.mul(nats, 1.0 / LN2)


def fill_predictions(codes, visible, logits, fsq_cfg):
    """Complete the code map: argmax index at masked positions (lowest
    index wins ties), decoded values kept exactly at visible positions."""
    codes = np.asarray(codes)
    out = codes.copy()
    masked = ~visible
    if masked.any():
        flat_logits = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
        grid_rows = masked.ravel()
        idx = np.argmax(flat_logits[grid_rows], axis=1)
        out[masked] = fsq.index_to_code(idx, fsq_cfg)
    return out
