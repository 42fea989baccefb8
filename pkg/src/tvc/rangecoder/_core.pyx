# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled range coder core. Must stay byte-identical to _python.py."""

from libc.stdlib cimport free, realloc

import numpy as np

ctypedef unsigned char u8
ctypedef unsigned int u32
ctypedef unsigned long long u64
ctypedef int i32

cdef u64 TOP = 1 << 24
cdef u64 MASK32 = 0xFFFFFFFF


cdef class Encoder:
    cdef u64 low
    cdef u64 rng
    cdef u64 cache
    cdef Py_ssize_t cache_size
    cdef u8 *buf
    cdef size_t buf_len
    cdef size_t buf_cap
    cdef bint done

    def __cinit__(self):
        self.low = 0
        self.rng = MASK32
        self.cache = 0
        self.cache_size = 1
        self.buf = NULL
        self.buf_len = 0
        self.buf_cap = 0
        self.done = False

    def __dealloc__(self):
        free(self.buf)

    cdef int _push(self, u8 byte) except -1:
        cdef u8 *grown
        if self.buf_len == self.buf_cap:
            self.buf_cap = self.buf_cap * 2 if self.buf_cap else 4096
            grown = <u8 *> realloc(self.buf, self.buf_cap)
            if grown == NULL:
                raise MemoryError()
            self.buf = grown
        self.buf[self.buf_len] = byte
        self.buf_len += 1
        return 0

    cdef int _shift_low(self) except -1:
        cdef u64 carry
        cdef Py_ssize_t j
        if (self.low & MASK32) < 0xFF000000UL or self.low > MASK32:
            carry = self.low >> 32
            self._push(<u8> ((self.cache + carry) & 0xFF))
            for j in range(self.cache_size - 1):
                self._push(<u8> ((0xFF + carry) & 0xFF))
            self.cache = (self.low >> 24) & 0xFF
            self.cache_size = 1
        else:
            self.cache_size += 1
        self.low = (self.low << 8) & MASK32
        return 0

    def encode_block(self, const i32[::1] symbols, const u32[:, :] cdfs, const i32[::1] sizes):
        if self.done:
            raise ValueError("encoder already finished")
        cdef Py_ssize_t i, n = symbols.shape[0]
        cdef i32 s
        cdef u64 r, cum_lo, cum_hi
        cdef u64 low = self.low
        cdef u64 rng = self.rng
        for i in range(n):
            s = symbols[i]
            if s < 0 or s >= sizes[i]:
                raise ValueError(f"symbol {s} outside cdf range [0, {sizes[i]})")
            cum_lo = cdfs[i, s]
            cum_hi = cdfs[i, s + 1]
            r = rng >> 16
            low += cum_lo * r
            rng = (cum_hi - cum_lo) * r
            while rng < TOP:
                self.low = low
                self._shift_low()
                low = self.low
                rng <<= 8
        self.low = low
        self.rng = rng

    def finish(self):
        cdef Py_ssize_t i
        if not self.done:
            for i in range(5):
                self._shift_low()
            self.done = True
        return bytes(self.buf[:self.buf_len]) if self.buf_len else b""


cdef class Decoder:
    cdef const u8[::1] ptr
    cdef Py_ssize_t pos
    cdef Py_ssize_t end
    cdef u64 code
    cdef u64 rng

    def __init__(self, data):
        data = bytes(data)
        if len(data) < 5:
            raise ValueError("range-coded stream truncated")
        self.ptr = data
        self.pos = 5
        self.end = len(data)
        cdef u64 code = 0
        cdef Py_ssize_t i
        for i in range(1, 5):  # byte 0 is the encoder's initial zero cache
            code = (code << 8) | self.ptr[i]
        self.code = code
        self.rng = MASK32

    def decode_block(self, const u32[:, :] cdfs, const i32[::1] sizes):
        cdef Py_ssize_t n = sizes.shape[0]
        out_arr = np.empty(n, dtype=np.int32)
        cdef i32[::1] out = out_arr
        cdef Py_ssize_t i, pos = self.pos
        cdef i32 size, lo, hi, mid
        cdef u64 r, val, cum_lo, cum_hi
        cdef u64 code = self.code
        cdef u64 rng = self.rng
        for i in range(n):
            size = sizes[i]
            r = rng >> 16
            val = code // r
            if val > 0xFFFF:
                val = 0xFFFF
            lo = 0
            hi = size
            while hi - lo > 1:
                mid = (lo + hi) >> 1
                if cdfs[i, mid] <= val:
                    lo = mid
                else:
                    hi = mid
            cum_lo = cdfs[i, lo]
            cum_hi = cdfs[i, lo + 1]
            code -= cum_lo * r
            rng = (cum_hi - cum_lo) * r
            while rng < TOP:
                if pos >= self.end:
                    self.pos = pos
                    self.code = code
                    self.rng = rng
                    raise ValueError("range-coded stream truncated")
                code = ((code << 8) | self.ptr[pos]) & MASK32
                pos += 1
                rng <<= 8
            out[i] = lo
        self.pos = pos
        self.code = code
        self.rng = rng
        return out_arr


def encode(symbols, cdfs, sizes):
    enc = Encoder()
    enc.encode_block(symbols, cdfs, sizes)
    return enc.finish()


def decode(data, cdfs, sizes):
    return Decoder(data).decode_block(cdfs, sizes)
