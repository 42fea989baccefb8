"""Deterministic bit-exact range coder.

Symbols are coded under per-symbol quantized cumulative-frequency rows
(total mass 2^16, every symbol mass >= 1; see tvc.cdf). The hot per-symbol
loop lives in the compiled _core extension when available; a pure-Python
implementation with byte-identical output is selected otherwise. Set
TVC_RANGECODER=python to force the fallback.

`RangeEncoder`/`RangeDecoder` are stateful so multiple blocks of symbols
(each with its own tables) share one interleaved stream; the one-shot
`encode_symbols`/`decode_symbols` wrap a single block.
"""

from __future__ import annotations

import os

import numpy as np

from . import _python

if os.environ.get("TVC_RANGECODER", "").lower() == "python":
    _impl = _python
    BACKEND = "python"
else:
    try:
        from . import _core as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _python
        BACKEND = "python"


def backend_name():
    return BACKEND


def _as_rows(cdfs, n):
    cdfs = np.asarray(cdfs, dtype=np.uint32)
    if cdfs.ndim == 1:
        cdfs = np.broadcast_to(cdfs, (n, cdfs.shape[0]))
    if cdfs.shape[0] != n:
        raise ValueError(f"{n} symbols but {cdfs.shape[0]} cdf rows")
    return np.ascontiguousarray(cdfs)


def _as_sizes(sizes, cdfs):
    if sizes is None:
        return np.full(cdfs.shape[0], cdfs.shape[1] - 1, dtype=np.int32)
    return np.ascontiguousarray(sizes, dtype=np.int32)


class RangeEncoder:
    def __init__(self):
        self._enc = _impl.Encoder()

    def encode_block(self, symbols, cdfs, sizes=None):
        symbols = np.ascontiguousarray(symbols, dtype=np.int32)
        cdfs = _as_rows(cdfs, symbols.shape[0])
        self._enc.encode_block(symbols, cdfs, _as_sizes(sizes, cdfs))

    def finish(self) -> bytes:
        return self._enc.finish()


class RangeDecoder:
    def __init__(self, data):
        self._dec = _impl.Decoder(bytes(data))

    def decode_block(self, cdfs, sizes=None, count=None):
        if count is None:
            count = len(sizes) if sizes is not None else np.asarray(cdfs).shape[0]
        cdfs = _as_rows(cdfs, count)
        return self._dec.decode_block(cdfs, _as_sizes(sizes, cdfs))


def encode_symbols(symbols, cdfs, sizes=None) -> bytes:
    """Encode an integer sequence; cdfs is (n, w) cumulative rows or a
    single shared row. Returns the coded bytes (flush-only for n == 0)."""
    enc = RangeEncoder()
    enc.encode_block(symbols, cdfs, sizes)
    return enc.finish()


def decode_symbols(data, cdfs, sizes=None, count=None):
    """Decode symbols coded by encode_symbols with the identical cdfs."""
    return RangeDecoder(data).decode_block(cdfs, sizes, count)
