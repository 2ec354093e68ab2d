"""Binary rasters for weights and input images.

Every record is a 16-byte little-endian header followed by a payload::

    offset  size  field
    0       4     magic b"OLFM"
    4       1     format version (1)
    5       1     precision n (fractional bits)
    6       1     rank (1 to 4)
    7       1     padding (0)
    8       8     four uint16 dims, unused trailing dims are 0

The payload holds prod(dims) two's-complement integers ``round(value * 2**n)``
in C order, int16 when ``n <= 15`` and int32 otherwise. Values lie in
(-1, 1), so each fits in n + 1 bits.

A weights file is a sequence of rank-4 ``(M, N, K, K)`` records, one per
conv level. An input file is one rank-3 ``(C, H, W)`` or rank-4
``(images, C, H, W)`` record.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ContractError, RangeError

MAGIC = b"OLFM"
VERSION = 1
HEADER = struct.Struct("<4sBBBxHHHH")


def _dtype(n: int):
    return np.dtype("<i2") if n <= 15 else np.dtype("<i4")


def pack(raw: np.ndarray, n: int) -> bytes:
    """Serialize an integer array already scaled by ``2**n``."""
    raw = np.asarray(raw)
    if not 1 <= n <= 30:
        raise ContractError(f"precision {n} outside [1, 30]")
    if not 1 <= raw.ndim <= 4:
        raise ContractError(f"rank {raw.ndim} outside [1, 4]")
    if any(d > 0xFFFF for d in raw.shape):
        raise ContractError(f"dimension too large for header: {raw.shape}")
    lim = 1 << n
    if raw.size and (raw.min() <= -lim or raw.max() >= lim):
        raise RangeError(f"values must lie strictly inside (-1, 1) at precision {n}")
    dims = tuple(raw.shape) + (0,) * (4 - raw.ndim)
    head = HEADER.pack(MAGIC, VERSION, n, raw.ndim, *dims)
    return head + np.ascontiguousarray(raw, dtype=_dtype(n)).tobytes()


def unpack(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int, int]:
    """Read one record; returns ``(raw int64 array, n, next_offset)``."""
    if len(buf) - offset < HEADER.size:
        raise ContractError("truncated raster header")
    magic, version, n, rank, *dims = HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise ContractError(f"bad raster magic {magic!r}")
    if version != VERSION:
        raise ContractError(f"unsupported raster version {version}")
    if not 1 <= rank <= 4 or any(d == 0 for d in dims[:rank]):
        raise ContractError(f"bad raster shape: rank {rank}, dims {dims}")
    shape = tuple(dims[:rank])
    dt = _dtype(n)
    count = int(np.prod(shape))
    start = offset + HEADER.size
    end = start + count * dt.itemsize
    if end > len(buf):
        raise ContractError("truncated raster payload")
    raw = np.frombuffer(buf, dtype=dt, count=count, offset=start).reshape(shape)
    return raw.astype(np.int64), n, end


def write_records(path, arrays, n: int) -> None:
    Path(path).write_bytes(b"".join(pack(a, n) for a in arrays))


def read_records(path) -> tuple[list, int]:
    buf = Path(path).read_bytes()
    if not buf:
        raise ContractError(f"{path}: empty raster file")
    out, precisions, off = [], set(), 0
    while off < len(buf):
        raw, n, off = unpack(buf, off)
        out.append(raw)
        precisions.add(n)
    if len(precisions) != 1:
        raise ContractError(f"{path}: records use mixed precisions {sorted(precisions)}")
    return out, precisions.pop()


def read_inputs(path) -> tuple[np.ndarray, int]:
    """Input images as ``(images, C, H, W)`` raw integers."""
    records, n = read_records(path)
    if len(records) != 1:
        raise ContractError(f"{path}: expected one input record, found {len(records)}")
    raw = records[0]
    if raw.ndim == 3:
        raw = raw[None]
    if raw.ndim != 4:
        raise ContractError(f"{path}: input must be rank 3 or 4, got rank {raw.ndim}")
    return raw, n


def read_weights(path) -> tuple[list, int]:
    records, n = read_records(path)
    for i, r in enumerate(records):
        if r.ndim != 4 or r.shape[2] != r.shape[3]:
            raise ContractError(f"{path}: weight record {i} must be (M, N, K, K), got {r.shape}")
    return records, n
