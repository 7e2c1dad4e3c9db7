"""Binary embedding files.

Layout (little-endian throughout)::

    offset  size  field
    0       4     magic  b"HCEB"
    4       2     version (uint16) = 1
    6       2     dtype code (uint16), 1 = float32
    8       4     rows T (uint32)
    12      4     cols D (uint32)
    16      4*T*D payload, row-major float32

Upstream feature extraction (summing transformer layers for audio, splicing
the last four hidden layers for text) happens before this file is written.
"""
import struct

import numpy as np

from ..errors import (BadMagicError, EmbeddingFileError, NonFinitePayloadError,
                      TruncatedPayloadError, UnsupportedVersionError)

MAGIC = b"HCEB"
VERSION = 1
DTYPE_F32 = 1
HEADER = struct.Struct("<4sHHII")


def write_embedding_file(path, array):
    arr = np.asarray(array)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise EmbeddingFileError(f"embedding arrays must be non-empty 2-D, got shape {arr.shape}")
    arr = np.ascontiguousarray(arr, dtype="<f4")
    if not np.isfinite(arr).all():
        raise NonFinitePayloadError(f"refusing to write non-finite values to {path}")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, DTYPE_F32, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def parse_embedding_bytes(buf, source="<bytes>"):
    if len(buf) < HEADER.size:
        raise TruncatedPayloadError(
            f"{source}: header needs {HEADER.size} bytes, file has {len(buf)}")
    magic, version, dtype, rows, cols = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagicError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"{source}: version {version}, expected {VERSION}")
    if dtype != DTYPE_F32:
        raise EmbeddingFileError(f"{source}: unsupported dtype code {dtype}")
    if rows < 1 or cols < 1:
        raise EmbeddingFileError(f"{source}: empty shape ({rows}, {cols})")
    expected = rows * cols * 4
    actual = len(buf) - HEADER.size
    if actual < expected:
        raise TruncatedPayloadError(
            f"{source}: payload truncated, expected {expected} bytes, got {actual}")
    if actual > expected:
        raise EmbeddingFileError(
            f"{source}: {actual - expected} trailing bytes after payload of {expected}")
    arr = np.frombuffer(buf, dtype="<f4", count=rows * cols, offset=HEADER.size).reshape(rows, cols)
    if not np.isfinite(arr).all():
        raise NonFinitePayloadError(f"{source}: payload contains NaN or Inf")
    return arr.astype(np.float32)


def read_embedding_file(path):
    """Read a (T, D) float32 array; exact inverse of :func:`write_embedding_file`."""
    with open(path, "rb") as fh:
        buf = fh.read()
    return parse_embedding_bytes(buf, str(path))
