"""Flat binary tensor files.

Layout (little-endian): magic ``DFT1``, rank ``u32``, ``rank`` extents as
``u32``, dtype tag ``u32`` (1 = float64), then the row-major float64 payload.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DFT1"
DTYPE_F64 = 1


class FormatError(ValueError):
    pass


def dumps(arr) -> bytes:
    arr = np.asarray(getattr(arr, "data", arr), dtype="<f8")
    head = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + struct.pack("<I", DTYPE_F64) + np.ascontiguousarray(arr).tobytes()


def loads(buf: bytes) -> np.ndarray:
    if buf[:4] != MAGIC:
        raise FormatError("bad magic, not a DFT1 tensor file")
    try:
        (rank,) = struct.unpack_from("<I", buf, 4)
        shape = struct.unpack_from(f"<{rank}I", buf, 8)
        off = 8 + 4 * rank
        (tag,) = struct.unpack_from("<I", buf, off)
    except struct.error:
        raise FormatError("truncated header") from None
    if tag != DTYPE_F64:
        raise FormatError(f"unsupported dtype tag {tag}")
    off += 4
    n = int(np.prod(shape)) if rank else 1
    if len(buf) - off != 8 * n:
        raise FormatError("payload length does not match header extents")
    return np.frombuffer(buf, dtype="<f8", count=n, offset=off).reshape(shape).astype(np.float64)


def save(path, arr):
    Path(path).write_bytes(dumps(arr))


def load(path) -> np.ndarray:
    return loads(Path(path).read_bytes())
