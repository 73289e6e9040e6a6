"""Fixed-header binary blocks for embedding matrices (``.edb`` files).

Layout, all little-endian:

    bytes 0..3    magic ``EDB1``
    bytes 4..7    u32 row count N
    bytes 8..11   u32 column count d
    bytes 12..15  u32 dtype tag (1 = 32-bit float)
    bytes 16..    N*d row-major float32 values

Matrices are stored at 32-bit precision; write followed by read is
bit-exact for float32 input. Readers may run concurrently; writers are
single-writer per path.
"""

from __future__ import annotations

import os
import struct

import numpy as np

__all__ = [
    "DTYPE_TAG_FLOAT32",
    "EdbError",
    "BadMagicError",
    "TruncatedPayloadError",
    "TrailingBytesError",
    "DtypeMismatchError",
    "write_embedding_block",
    "read_embedding_block",
]

_MAGIC = b"EDB1"
_HEADER = struct.Struct("<4sIII")
DTYPE_TAG_FLOAT32 = 1


class EdbError(Exception):
    """Base error for embedding-block I/O; carries a stable ``code``."""

    code = "edb_error"


class BadMagicError(EdbError):
    code = "bad_magic"


class TruncatedPayloadError(EdbError):
    code = "truncated_payload"


class TrailingBytesError(EdbError):
    code = "trailing_bytes"


class DtypeMismatchError(EdbError):
    code = "dtype_mismatch"


def write_embedding_block(matrix: np.ndarray, path: os.PathLike | str) -> int:
    """Write a 2-D matrix as float32 and return the byte count written.

    Non-finite entries are rejected before the file is touched.
    """
    arr = np.asarray(matrix)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    n, d = arr.shape
    if n <= 0 or d <= 0:
        raise ValueError(f"matrix dimensions must be positive, got {n}x{d}")
    if not np.isfinite(arr).all():
        raise ValueError("matrix contains non-finite entries")
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    header = _HEADER.pack(_MAGIC, n, d, DTYPE_TAG_FLOAT32)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    return len(header) + len(payload)


def read_embedding_block(path: os.PathLike | str) -> np.ndarray:
    """Inverse of :func:`write_embedding_block`, bit-exact."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: file shorter than the 16-byte header")
    magic, n, d, tag = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if tag != DTYPE_TAG_FLOAT32:
        raise DtypeMismatchError(f"{path}: unsupported dtype tag {tag}")
    expected = n * d * 4
    actual = len(data) - _HEADER.size
    if actual < expected:
        raise TruncatedPayloadError(
            f"{path}: payload holds {actual} bytes, header declares {expected}"
        )
    if actual > expected:
        raise TrailingBytesError(
            f"{path}: {actual - expected} trailing bytes beyond declared payload"
        )
    flat = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    return flat.reshape(n, d).copy()
