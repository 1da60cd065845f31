"""Reader/writer for the FTC1 tensor container.

Independent implementation of the wire format so exports can be verified
against the core pipeline's reader bit-for-bit. Layout: magic "FTC1",
u32 version (1), u32 dtype code (0 = f32, 1 = f64), u32 ndim, u32 dims,
then the raw little-endian row-major payload.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"FTC1"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_MAX_NDIM = 8


class FTCError(ValueError):
    pass


def write_ftc(path, array: np.ndarray) -> None:
    arr = np.asarray(array)
    if arr.dtype == np.float32:
        code = 0
    else:
        code = 1
    arr = np.ascontiguousarray(arr, dtype=_DTYPES[code])
    if not np.all(np.isfinite(arr)):
        raise FTCError("refusing to write non-finite values")
    if arr.ndim == 0 or arr.ndim > _MAX_NDIM:
        raise FTCError(f"ndim must lie in [1, {_MAX_NDIM}]")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, code, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def read_ftc(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise FTCError("bad container magic")
    version, code, ndim = struct.unpack_from("<III", blob, 4)
    if version != VERSION or code not in _DTYPES or not 1 <= ndim <= _MAX_NDIM:
        raise FTCError("unsupported container header")
    dims = struct.unpack_from(f"<{ndim}I", blob, 16)
    dtype = _DTYPES[code]
    start = 16 + 4 * ndim
    count = int(np.prod(dims, dtype=np.int64))
    if len(blob) != start + count * dtype.itemsize:
        raise FTCError("payload length does not match header dims")
    return np.frombuffer(blob[start:], dtype=dtype).reshape(dims).copy()
