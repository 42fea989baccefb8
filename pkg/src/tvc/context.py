"""Checkerboard context models for both token streams.

Coding happens in two passes over a spatial-parity partition shared by
all frames: anchors ((h+w) even) are coded from hyperprior features
alone; non-anchors additionally see a context convolution whose input is
the anchor-masked symbol grid, so every probability the decoder needs is
computable from what it has already decoded. The same float32 forward
runs on both sides, making encoder and decoder parameters bit-identical.

Continuous stream: uniform quantization (step 1, ties away from zero),
conditional Gaussians per symbol. Discrete stream: per-channel
categoricals over the FSQ levels, evaluated only at visible positions;
masked positions enter the context as their continuous-stream fill, never
as true tokens.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import cdf as cdflib
from .autodiff import Tensor, no_grad
from .cdf import DEFAULT_SUPPORT, SIGMA_MIN
from .layers import (Conv3d, Module, crop_spatial, round_half_away, soft_bound,
                     upsample_spatial2x)

LN2 = float(np.log(2.0))


def anchor_map(grid_shape):
    """Spatial checkerboard shared across frames: (h+w) even = anchor."""
    t, h, w = grid_shape
    parity = (np.arange(h)[:, None] + np.arange(w)[None, :]) % 2 == 0
    return np.broadcast_to(parity, (t, h, w)).copy()


def _prior_scale_raw_init(scale):
    # softplus^-1: scale = SIGMA_MIN + softplus(raw)
    return float(np.log(np.expm1(scale - SIGMA_MIN)))


class _HyperCoder(Module):
    """Two-layer strided hyper-encoder + mirrored feature decoder."""

    def __init__(self, in_channels, hyper_channels, hyper_width, bound, rng, dtype):
        self.enc1 = Conv3d(in_channels, hyper_width, (1, 3, 3), (1, 2, 2), rng, dtype)
        self.enc2 = Conv3d(hyper_width, hyper_channels, (1, 3, 3), (1, 1, 1), rng, dtype)
        self.dec1 = Conv3d(hyper_channels, hyper_width, (1, 3, 3), (1, 1, 1), rng, dtype)
        self.dec2 = Conv3d(hyper_width, hyper_width, (1, 3, 3), (1, 1, 1), rng, dtype)
        self.prior_loc = Tensor(np.zeros(hyper_channels, dtype=dtype), requires_grad=True)
        self.prior_scale_raw = Tensor(
            np.full(hyper_channels, _prior_scale_raw_init(2.0), dtype=dtype),
            requires_grad=True)
        self._bound = bound

    def latent(self, y):
        return soft_bound(self.enc2(ad.gelu(self.enc1(y))), self._bound)

    def features(self, z_hat, hw):
        f = ad.gelu(self.dec1(z_hat))
        f = crop_spatial(upsample_spatial2x(f), hw[0], hw[1])
        return ad.gelu(self.dec2(f))

    def prior_scale(self):
        return ad.add(ad.softplus(self.prior_scale_raw), SIGMA_MIN)

    def prior_bits(self, z_hat):
        """Per-element -log2 p under the factorized logistic prior (Tensor)."""
        scale = self.prior_scale()
        upper = ad.div(ad.sub(ad.add(z_hat, 0.5), self.prior_loc), scale)
        lower = ad.div(ad.sub(ad.sub(z_hat, 0.5), self.prior_loc), scale)
        p = ad.sub(ad.sigmoid(upper), ad.sigmoid(lower))
        return ad.mul(ad.log(ad.add(p, 1e-9)), -1.0 / LN2)

    def prior_rows(self, count_positions):
        """Quantized coder tables for `count_positions` grid cells
        (row-major positions, channel minor)."""
        loc = self.prior_loc.data.astype(np.float64)
        with np.errstate(over="ignore"):
            scale = SIGMA_MIN + np.log1p(np.exp(-np.abs(self.prior_scale_raw.data))) \
                + np.maximum(self.prior_scale_raw.data, 0.0)
        rows = cdflib.logistic_cdf_rows(loc, scale.astype(np.float64))
        return np.tile(rows, (count_positions, 1))

    def prior_eval_bits(self, z_sym):
        """Float64 cross-entropy of hard-rounded hyper symbols (scalar bits)."""
        c = z_sym.shape[-1]
        loc = np.tile(self.prior_loc.data.astype(np.float64), z_sym.size // c)
        with np.errstate(over="ignore"):
            scale = SIGMA_MIN + np.log1p(np.exp(-np.abs(self.prior_scale_raw.data))) \
                + np.maximum(self.prior_scale_raw.data, 0.0)
        scale = np.tile(scale.astype(np.float64), z_sym.size // c)
        return float(cdflib.logistic_bits(z_sym.ravel(), loc, scale).sum())


def gaussian_bits_tensor(y_hat, mu, sigma):
    """Per-element -log2 Gaussian interval mass (differentiable)."""
    upper = ad.div(ad.sub(ad.add(y_hat, 0.5), mu), sigma)
    lower = ad.div(ad.sub(ad.sub(y_hat, 0.5), mu), sigma)
    p = ad.sub(ad.normal_cdf(upper), ad.normal_cdf(lower))
    return ad.mul(ad.log(ad.add(p, 1e-9)), -1.0 / LN2)


def additive_noise_quantizer(rng):
    """Training surrogate: y + U(-1/2, 1/2), seeded."""

    def q(x):
        noise = rng.uniform(-0.5, 0.5, x.shape).astype(np.dtype(x.dtype))
        return ad.add(x, Tensor(noise))

    return q


def hard_round_quantizer(x):
    """Eval surrogate: straight-through round, ties away from zero."""
    offset = round_half_away(x.data) - x.data
    return ad.add(x, Tensor(offset.astype(x.dtype)))


class ContinuousCCM(Module):
    """Hyperprior + two-pass Gaussian parameter prediction for the
    uniformly quantized continuous latent."""

    def __init__(self, cont_channels=16, hyper_channels=8, hyper_width=32,
                 ctx_width=32, head_width=64, bound=30.0, rng=None, dtype=np.float32):
        self.cont_channels = cont_channels
        self.hyper = _HyperCoder(cont_channels, hyper_channels, hyper_width, bound, rng, dtype)
        self.ctx_conv = Conv3d(cont_channels, ctx_width, (3, 5, 5), (1, 1, 1), rng, dtype)
        self.head1 = Conv3d(hyper_width + ctx_width, head_width, (1, 1, 1), (1, 1, 1), rng, dtype)
        self.head2 = Conv3d(head_width, 2 * cont_channels, (1, 1, 1), (1, 1, 1), rng, dtype)
        # start sigma near 2 so untrained models still code cheaply
        self.head2.b.data[cont_channels:] = _prior_scale_raw_init(2.0)
        self._ctx_width = ctx_width

    def gauss_params(self, feat, ctx):
        h = ad.gelu(self.head1(ad.concat([feat, ctx], 3)))
        out = self.head2(h)
        c = self.cont_channels
        mu = ad.slice_axis(out, 3, 0, c)
        sigma = ad.add(ad.softplus(ad.slice_axis(out, 3, c, 2 * c)), SIGMA_MIN)
        return mu, sigma

    def two_pass_params(self, y_hat, feat, anchor):
        """(mu,sigma) for anchors (hyper only) and non-anchors (hyper+context).

        y_hat is the quantized latent; its non-anchor entries are zeroed
        before the context convolution so non-anchor parameters depend
        only on decoded anchors.
        """
        zeros_ctx = Tensor(np.zeros(feat.shape[:3] + (self._ctx_width,),
                                    dtype=np.dtype(feat.dtype)))
        mu_a, sig_a = self.gauss_params(feat, zeros_ctx)
        masked = ad.mul(y_hat, Tensor(anchor[..., None].astype(np.dtype(y_hat.dtype))))
        ctx = ad.gelu(self.ctx_conv(masked))
        mu_n, sig_n = self.gauss_params(feat, ctx)
        return (mu_a, sig_a), (mu_n, sig_n)

    def rate_bits(self, y, quantizer):
        """Total Eq-style bit cost of (latent + hyper latent), differentiable.

        Returns (total_bits Tensor, y_bits Tensor, z_bits Tensor, y_hat, z_hat).
        """
        z = self.hyper.latent(y)
        z_hat = quantizer(z)
        feat = self.hyper.features(z_hat, (y.shape[1], y.shape[2]))
        y_hat = quantizer(y)
        anchor = anchor_map(y.shape[:3])
        (mu_a, sig_a), (mu_n, sig_n) = self.two_pass_params(y_hat, feat, anchor)
        amask = Tensor(anchor[..., None].astype(np.dtype(y.dtype)))
        bits_a = ad.mul(gaussian_bits_tensor(y_hat, mu_a, sig_a), amask)
        bits_n = ad.mul(gaussian_bits_tensor(y_hat, mu_n, sig_n), ad.sub(1.0, amask))
        y_bits = ad.add(ad.tsum(bits_a), ad.tsum(bits_n))
        z_bits = ad.tsum(self.hyper.prior_bits(z_hat))
        return ad.add(y_bits, z_bits), y_bits, z_bits, y_hat, z_hat


class DiscreteCCM(Module):
    """Hyperprior + mask-aware two-pass categorical coder for visible tokens."""

    def __init__(self, levels=(4, 4, 4, 4, 4, 4), cont_channels=16, hyper_channels=8,
                 hyper_width=32, ctx_width=32, head_width=64, bound=30.0,
                 rng=None, dtype=np.float32):
        self.levels = tuple(levels)
        code_channels = len(levels)
        self.hyper = _HyperCoder(code_channels, hyper_channels, hyper_width, bound, rng, dtype)
        self.ctx_conv = Conv3d(code_channels, ctx_width, (3, 5, 5), (1, 1, 1), rng, dtype)
        self.cont_conv = Conv3d(cont_channels, ctx_width, (1, 1, 1), (1, 1, 1), rng, dtype)
        self.head1 = Conv3d(hyper_width + 2 * ctx_width, head_width, (1, 1, 1), (1, 1, 1), rng, dtype)
        self.head2 = Conv3d(head_width, int(sum(levels)), (1, 1, 1), (1, 1, 1), rng, dtype)

    def logits(self, feat, state, cont_feat):
        """Per-position concatenated per-channel level logits."""
        ctx = ad.gelu(self.ctx_conv(state))
        h = ad.gelu(self.head1(ad.concat([feat, ctx, cont_feat], 3)))
        return self.head2(h)

    def cont_features(self, cont_up):
        return ad.gelu(self.cont_conv(cont_up))

    def split_logits(self, logits_np):
        """(T,H,W,sum L) -> list of (T,H,W,L_c) slices."""
        out = []
        start = 0
        for l in self.levels:
            out.append(logits_np[..., start:start + l])
            start += l
        return out

    def rate_bits(self, codes, fill, visible, cont_up, quantizer):
        """Differentiable bit cost of (visible tokens + hyper latent).

        codes: integer map; fill: Tensor from fill_masked; visible: bool
        grid; cont_up: Tensor of the upsampled quantized continuous latent.
        Returns (total_bits, token_bits, z_bits, z_hat).
        """
        from . import fsq as fsqlib

        dtype = np.dtype(fill.dtype)
        dequant = Tensor(fsqlib.dequantize(codes, self.levels).astype(dtype))
        z = self.hyper.latent(dequant)
        z_hat = quantizer(z)
        feat = self.hyper.features(z_hat, (codes.shape[1], codes.shape[2]))
        cont_feat = self.cont_features(cont_up)

        anchor = anchor_map(codes.shape[:3])
        known1 = (~visible)[..., None].astype(dtype)
        state1 = ad.mul(fill, Tensor(known1))
        logits1 = self.logits(feat, state1, cont_feat)
        known2 = (~visible | (visible & anchor))[..., None].astype(dtype)
        state2 = ad.mul(fill, Tensor(known2))
        logits2 = self.logits(feat, state2, cont_feat)

        token_bits = None
        for pass_logits, pos_mask in ((logits1, visible & anchor),
                                      (logits2, visible & ~anchor)):
            if not pos_mask.any():
                continue
            start = 0
            for c, l in enumerate(self.levels):
                sel = ad.slice_axis(pass_logits, 3, start, start + l)
                logp = ad.log_softmax(sel, axis=-1)
                onehot = np.zeros(codes.shape[:3] + (l,), dtype=dtype)
                idx = np.nonzero(pos_mask)
                onehot[idx + (codes[..., c][idx],)] = 1.0
                contrib = ad.mul(ad.tsum(ad.mul(logp, Tensor(onehot))), -1.0 / LN2)
                token_bits = contrib if token_bits is None else ad.add(token_bits, contrib)
                start += l
        if token_bits is None:
            token_bits = Tensor(np.zeros((), dtype=dtype))
        z_bits = ad.tsum(self.hyper.prior_bits(z_hat))
        return ad.add(token_bits, z_bits), token_bits, z_bits, z_hat


# --- inference-side stream coding ------------------------------------------


def _hyper_roundtrip(hyper, y_tensor, grid_hw, support):
    """Round the hyper latent, returning (symbols int64, features Tensor)."""
    z = hyper.latent(y_tensor).data
    z_sym = round_half_away(z).astype(np.int64)
    if np.abs(z_sym).max(initial=0) > support:
        raise ValueError("hyper latent outside coder support")
    feat = hyper.features(Tensor(z_sym.astype(z.dtype)), grid_hw)
    return z_sym, feat


def encode_continuous_stream(ccm: ContinuousCCM, y_np, support=DEFAULT_SUPPORT):
    """Code a continuous latent -> (z bytes, y bytes, y_hat, stats)."""
    from .rangecoder import RangeEncoder, encode_symbols

    with no_grad():
        y = Tensor(y_np)
        z_sym, feat = _hyper_roundtrip(ccm.hyper, y, (y_np.shape[1], y_np.shape[2]), support)
        rows_z = ccm.hyper.prior_rows(z_sym.size // z_sym.shape[-1])
        bytes_z = encode_symbols(z_sym.ravel() + support, rows_z)

        y_sym = round_half_away(y_np).astype(np.int64)
        if np.abs(y_sym).max(initial=0) > support:
            raise ValueError("continuous latent outside coder support")
        y_hat = Tensor(y_sym.astype(np.float32))
        anchor = anchor_map(y_np.shape[:3])
        (mu_a, sig_a), (mu_n, sig_n) = ccm.two_pass_params(y_hat, feat, anchor)

        enc = RangeEncoder()
        model_bits = 0.0
        for mask, (mu, sig) in ((anchor, (mu_a, sig_a)), (~anchor, (mu_n, sig_n))):
            syms = y_sym[mask].ravel()
            mus = mu.data[mask].ravel()
            sigs = sig.data[mask].ravel()
            rows = cdflib.gaussian_cdf_rows(mus, sigs, support)
            enc.encode_block(syms + support, rows)
            model_bits += float(cdflib.gaussian_bits(syms, mus, sigs, support).sum())
        bytes_y = enc.finish()
        stats = {
            "z_bits_model": ccm.hyper.prior_eval_bits(z_sym),
            "y_bits_model": model_bits,
        }
        return bytes_z, bytes_y, y_sym.astype(np.float32), z_sym, stats


def decode_continuous_stream(ccm: ContinuousCCM, bytes_z, bytes_y, grid_shape,
                             support=DEFAULT_SUPPORT):
    """Exact inverse of encode_continuous_stream; returns the dequantized
    latent (float32)."""
    from .rangecoder import RangeDecoder, decode_symbols

    t, h, w = grid_shape
    c = ccm.cont_channels
    with no_grad():
        hyper_shape = (t, (h - 1) // 2 + 1, (w - 1) // 2 + 1,
                       ccm.hyper.prior_loc.shape[0])
        n_hyper = int(np.prod(hyper_shape[:3]))
        rows_z = ccm.hyper.prior_rows(n_hyper)
        z_sym = decode_symbols(bytes_z, rows_z).astype(np.int64) - support
        z_sym = z_sym.reshape(hyper_shape)
        feat = ccm.hyper.features(Tensor(z_sym.astype(np.float32)), (h, w))

        anchor = anchor_map(grid_shape)
        zeros_ctx = Tensor(np.zeros((t, h, w, ccm._ctx_width), dtype=np.float32))
        mu_a, sig_a = ccm.gauss_params(feat, zeros_ctx)

        dec = RangeDecoder(bytes_y)
        y_sym = np.zeros((t, h, w, c), dtype=np.int64)
        rows = cdflib.gaussian_cdf_rows(mu_a.data[anchor].ravel(),
                                        sig_a.data[anchor].ravel(), support)
        y_sym[anchor] = (dec.decode_block(rows).astype(np.int64) - support).reshape(-1, c)

        masked = ad.mul(Tensor(y_sym.astype(np.float32)),
                        Tensor(anchor[..., None].astype(np.float32)))
        ctx = ad.gelu(ccm.ctx_conv(masked))
        mu_n, sig_n = ccm.gauss_params(feat, ctx)
        rows = cdflib.gaussian_cdf_rows(mu_n.data[~anchor].ravel(),
                                        sig_n.data[~anchor].ravel(), support)
        y_sym[~anchor] = (dec.decode_block(rows).astype(np.int64) - support).reshape(-1, c)
        return y_sym.astype(np.float32), z_sym


def _categorical_blocks(ccm: DiscreteCCM, logits_np, pos_mask):
    """Coder tables for all channels of the selected positions.

    Symbol order: positions row-major, channels minor. Returns
    (rows, sizes, model_bits_fn(codes_at_positions))."""
    levels = ccm.levels
    max_l = max(levels)
    sel = logits_np[pos_mask]  # (n, sum L)
    n = sel.shape[0]
    rows = np.full((n, len(levels), max_l + 1), cdflib.TOTAL, dtype=np.uint32)
    start = 0
    for c, l in enumerate(levels):
        rows_c = cdflib.categorical_cdf_rows(sel[:, start:start + l])
        rows[:, c, : l + 1] = rows_c
        start += l
    rows = rows.reshape(n * len(levels), max_l + 1)
    sizes = np.tile(np.asarray(levels, dtype=np.int32), n)
    return rows, sizes


def _categorical_model_bits(ccm: DiscreteCCM, logits_np, pos_mask, codes):
    sel = logits_np[pos_mask]
    truth = codes[pos_mask]
    total = 0.0
    start = 0
    for c, l in enumerate(ccm.levels):
        total += float(cdflib.categorical_bits(truth[:, c], sel[:, start:start + l]).sum())
        start += l
    return total


def encode_discrete_stream(ccm: DiscreteCCM, codes, visible, fill, cont_up,
                           support=DEFAULT_SUPPORT):
    """Code hyper latent + visible tokens -> (z bytes, token bytes, stats)."""
    from . import fsq as fsqlib
    from .rangecoder import RangeEncoder, encode_symbols

    with no_grad():
        dequant = Tensor(fsqlib.dequantize(codes, ccm.levels))
        z_sym, feat = _hyper_roundtrip(ccm.hyper, dequant,
                                       (codes.shape[1], codes.shape[2]), support)
        rows_z = ccm.hyper.prior_rows(z_sym.size // z_sym.shape[-1])
        bytes_z = encode_symbols(z_sym.ravel() + support, rows_z)

        cont_feat = ccm.cont_features(cont_up)
        anchor = anchor_map(codes.shape[:3])
        enc = RangeEncoder()
        model_bits = 0.0
        for known, pos_mask in _pass_masks(visible, anchor):
            state = ad.mul(fill, Tensor(known[..., None].astype(np.float32)))
            logits = ccm.logits(feat, state, cont_feat).data
            if pos_mask.any():
                rows, sizes = _categorical_blocks(ccm, logits, pos_mask)
                enc.encode_block(codes[pos_mask].ravel(), rows, sizes)
                model_bits += _categorical_model_bits(ccm, logits, pos_mask, codes)
        bytes_tok = enc.finish()
        stats = {
            "z_bits_model": ccm.hyper.prior_eval_bits(z_sym),
            "token_bits_model": model_bits,
            "coded_tokens": int(visible.sum()) * len(ccm.levels),
        }
        return bytes_z, bytes_tok, z_sym, stats


def _pass_masks(visible, anchor):
    """Checkerboard schedule: what the decoder knows entering each pass,
    and which positions that pass codes."""
    yield ~visible, visible & anchor
    yield (~visible) | (visible & anchor), visible & ~anchor


def decode_discrete_stream(ccm: DiscreteCCM, bytes_z, bytes_tok, visible, fill_fn,
                           cont_up, grid_shape, support=DEFAULT_SUPPORT):
    """Inverse of encode_discrete_stream.

    fill_fn(codes) must rebuild the fill grid from the codes decoded so
    far (masked positions never read codes, so partial grids are safe).
    Returns codes with -1 at masked (never coded) positions.
    """
    from .rangecoder import RangeDecoder, decode_symbols

    t, h, w = grid_shape
    n_ch = len(ccm.levels)
    with no_grad():
        hyper_shape = (t, (h - 1) // 2 + 1, (w - 1) // 2 + 1,
                       ccm.hyper.prior_loc.shape[0])
        n_hyper = int(np.prod(hyper_shape[:3]))
        rows_z = ccm.hyper.prior_rows(n_hyper)
        z_sym = (decode_symbols(bytes_z, rows_z).astype(np.int64) - support).reshape(hyper_shape)
        feat = ccm.hyper.features(Tensor(z_sym.astype(np.float32)), (h, w))
        cont_feat = ccm.cont_features(cont_up)

        anchor = anchor_map(grid_shape)
        codes = np.full((t, h, w, n_ch), -1, dtype=np.int64)
        codes[visible] = 0  # placeholder until decoded
        dec = RangeDecoder(bytes_tok)
        for known, pos_mask in _pass_masks(visible, anchor):
            state = ad.mul(fill_fn(codes), Tensor(known[..., None].astype(np.float32)))
            logits = ccm.logits(feat, state, cont_feat).data
            if pos_mask.any():
                rows, sizes = _categorical_blocks(ccm, logits, pos_mask)
                syms = dec.decode_block(rows, sizes)
                codes[pos_mask] = syms.reshape(-1, n_ch)
        codes[~visible] = -1
        return codes, z_sym
