"""Minimal binary matrix container for instance reproducibility.

Layout: 8-byte magic, two little-endian int64 dimensions (rows, cols), then
row-major float64 payload.  No compression, no metadata; pair the files with
the JSON run summary for provenance.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"SLMAT001"
_HEADER = struct.Struct("<8sqq")


def save_matrix(path, matrix: np.ndarray) -> None:
    m = np.ascontiguousarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"only 2-d matrices are supported, got ndim={m.ndim}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, m.shape[0], m.shape[1]))
        fh.write(m.tobytes(order="C"))


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, rows, cols = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if rows < 0 or cols < 0:
            raise ValueError(f"{path}: negative dimensions ({rows}, {cols})")
        payload = fh.read(8 * rows * cols)
        if len(payload) != 8 * rows * cols:
            raise ValueError(f"{path}: truncated payload")
        extra = fh.read(1)
        if extra:
            raise ValueError(f"{path}: trailing bytes after payload")
    return np.frombuffer(payload, dtype=np.float64).reshape(rows, cols).copy()
