"""Named-tensor checkpoint archive.

Layout: magic "TVCW", version byte, then one entry per tensor in sorted
name order: u16 name length + UTF-8 name, u8 rank, u32 extent per axis,
raw little-endian float32 payload.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"TVCW"
VERSION = 1


def save_tensors(path, named):
    """Write {name: ndarray-or-Tensor} to `path` atomically."""
    chunks = [MAGIC, struct.pack("<B", VERSION)]
    for name in sorted(named):
        arr = named[name]
        data = np.ascontiguousarray(getattr(arr, "data", arr), dtype=np.float32)
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(data.astype("<f4").tobytes())
    blob = b"".join(chunks)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)
    return blob


def load_tensors(path):
    """Read a checkpoint archive into {name: float32 ndarray}."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic {blob[:4]!r}")
    version = blob[4]
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    pos = 5
    out = {}
    while pos < len(blob):
        (nlen,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + nlen].decode("utf-8")
        pos += nlen
        rank = blob[pos]
        pos += 1
        shape = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        count = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(shape)
        pos += 4 * count
        out[name] = np.array(arr, dtype=np.float32)
    return out


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash; identifies a weight file on the wire."""
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def file_fnv1a64(path) -> int:
    with open(path, "rb") as fh:
        return fnv1a64(fh.read())
