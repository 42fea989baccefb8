"""Pure-Python range coder backend.

Carry-propagating byte-wise range coder (cache + pending-0xFF scheme),
32-bit range, renormalization threshold 2^24, cumulative frequency totals
fixed at 2^16. The compiled backend in _core.pyx implements the identical
algorithm; both must produce byte-identical streams.

Encoder and decoder are stateful so several blocks of symbols, each with
its own probability tables, can share one interleaved stream (the
checkerboard context models decode anchors before the tables for the
non-anchor block exist).
"""

from __future__ import annotations

import numpy as np

TOP = 1 << 24
MASK32 = 0xFFFFFFFF
TOTAL_BITS = 16


class Encoder:
    def __init__(self):
        self.low = 0
        self.rng = MASK32
        self.cache = 0
        self.cache_size = 1
        self.out = bytearray()
        self.done = False

    def _shift_low(self):
        low = self.low
        if (low & MASK32) < 0xFF000000 or low > MASK32:
            carry = low >> 32
            self.out.append((self.cache + carry) & 0xFF)
            for _ in range(self.cache_size - 1):
                self.out.append((0xFF + carry) & 0xFF)
            self.cache = (low >> 24) & 0xFF
            self.cache_size = 1
        else:
            self.cache_size += 1
        self.low = (low << 8) & MASK32

    def encode_block(self, symbols, cdfs, sizes):
        """Encode symbols[i] under cumulative row cdfs[i] (total 2^16)."""
        if self.done:
            raise ValueError("encoder already finished")
        low = self.low
        rng = self.rng
        sym = symbols.tolist()
        size_list = sizes.tolist()
        for i, s in enumerate(sym):
            if s < 0 or s >= size_list[i]:
                raise ValueError(f"symbol {s} outside cdf range [0, {size_list[i]})")
            row = cdfs[i]
            cum_lo = int(row[s])
            cum_hi = int(row[s + 1])
            r = rng >> TOTAL_BITS
            low += cum_lo * r
            rng = (cum_hi - cum_lo) * r
            while rng < TOP:
                if (low & MASK32) < 0xFF000000 or low > MASK32:
                    carry = low >> 32
                    self.out.append((self.cache + carry) & 0xFF)
                    for _ in range(self.cache_size - 1):
                        self.out.append((0xFF + carry) & 0xFF)
                    self.cache = (low >> 24) & 0xFF
                    self.cache_size = 1
                else:
                    self.cache_size += 1
                low = (low << 8) & MASK32
                rng <<= 8
        self.low = low
        self.rng = rng

    def finish(self):
        if not self.done:
            for _ in range(5):
                self._shift_low()
            self.done = True
        return bytes(self.out)


class Decoder:
    def __init__(self, data):
        data = data.tobytes() if hasattr(data, "tobytes") else bytes(data)
        if len(data) < 5:
            raise ValueError("range-coded stream truncated")
        self.data = data
        self.pos = 5
        code = 0
        for b in data[1:5]:  # byte 0 is the encoder's initial zero cache
            code = (code << 8) | b
        self.code = code
        self.rng = MASK32

    def decode_block(self, cdfs, sizes):
        """Decode len(sizes) symbols; exact mirror of encode_block."""
        n = len(sizes)
        out = np.empty(n, dtype=np.int32)
        data = self.data
        end = len(data)
        pos = self.pos
        code = self.code
        rng = self.rng
        size_list = sizes.tolist()
        for i in range(n):
            row = cdfs[i]
            size = size_list[i]
            r = rng >> TOTAL_BITS
            val = code // r
            if val > 0xFFFF:
                val = 0xFFFF
            lo, hi = 0, size
            while hi - lo > 1:
                mid = (lo + hi) >> 1
                if int(row[mid]) <= val:
                    lo = mid
                else:
                    hi = mid
            cum_lo = int(row[lo])
            cum_hi = int(row[lo + 1])
            code -= cum_lo * r
            rng = (cum_hi - cum_lo) * r
            while rng < TOP:
                if pos >= end:
                    raise ValueError("range-coded stream truncated")
                code = ((code << 8) | data[pos]) & MASK32
                pos += 1
                rng <<= 8
            out[i] = lo
        self.pos = pos
        self.code = code
        self.rng = rng
        return out


def encode(symbols, cdfs, sizes):
    enc = Encoder()
    enc.encode_block(symbols, cdfs, sizes)
    return enc.finish()


def decode(data, cdfs, sizes):
    return Decoder(data).decode_block(cdfs, sizes)
