"""Little-endian length-prefixed helpers shared by the binary snapshot formats."""
from __future__ import annotations

import io
import struct
from collections.abc import Sequence

import numpy as np


class FormatError(ValueError):
    """Raised when a binary snapshot is truncated or has the wrong header."""


def write_strings(buf: io.BytesIO, items: Sequence[str]) -> None:
    encoded = [s.encode("utf-8") for s in items]
    buf.write(struct.pack("<Q", len(encoded)))
    buf.write(np.asarray([len(e) for e in encoded], dtype="<u4").tobytes())
    buf.write(b"".join(encoded))


def read_exact(buf: io.BytesIO, n: int) -> bytes:
    data = buf.read(n)
    if len(data) != n:
        raise FormatError("truncated snapshot")
    return data


def read_strings(buf: io.BytesIO) -> list[str]:
    (count,) = struct.unpack("<Q", read_exact(buf, 8))
    lengths = np.frombuffer(read_exact(buf, 4 * count), dtype="<u4").tolist()
    blob = read_exact(buf, sum(lengths))
    out, pos = [], 0
    for length in lengths:
        out.append(blob[pos:pos + length].decode("utf-8"))
        pos += length
    return out


def write_array(buf: io.BytesIO, arr: np.ndarray, dtype: str) -> None:
    data = np.ascontiguousarray(arr, dtype=dtype)
    buf.write(struct.pack("<Q", data.size))
    buf.write(data.tobytes())


def read_array(buf: io.BytesIO, dtype: str) -> np.ndarray:
    (n,) = struct.unpack("<Q", read_exact(buf, 8))
    width = np.dtype(dtype).itemsize
    return np.frombuffer(read_exact(buf, width * n), dtype=dtype).copy()
