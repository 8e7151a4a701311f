"""RBTK binary tensor records.

Each record is a fixed 18-byte header followed by little-endian payload::

    b"RBTK" | version: u16 | dims: 3 x u32 | data

Version 1 carries complex data as interleaved real/imag float32 values in
C order (for radar frames: antenna-major, sample-next, chirp-minor).
Version 2 carries real float64 values, used for maps and model weights.
Tensors with fewer than three dims are padded with leading ones; tensors
with more are flattened over the trailing axes, so callers that need the
exact shape keep it elsewhere (e.g. a JSON manifest).

A file is a plain concatenation of records.
"""
from __future__ import annotations

import io
import os
import struct
from typing import BinaryIO, Iterator, Sequence

import numpy as np

MAGIC = b"RBTK"
VERSION_COMPLEX = 1
VERSION_REAL = 2
_HEADER = struct.Struct("<4sH3I")


class FormatError(ValueError):
    """Raised on malformed or truncated RBTK data."""


def _dims3(shape: Sequence[int]) -> tuple[int, int, int]:
    shape = tuple(int(s) for s in shape)
    if len(shape) <= 3:
        return (1,) * (3 - len(shape)) + shape
    return shape[0], shape[1], int(np.prod(shape[2:]))


def write_record(fh: BinaryIO, array: np.ndarray) -> None:
    array = np.asarray(array)
    dims = _dims3(array.shape)
    if np.iscomplexobj(array):
        payload = np.empty(array.size * 2, dtype="<f4")
        flat = array.reshape(-1)
        payload[0::2] = flat.real
        payload[1::2] = flat.imag
        version = VERSION_COMPLEX
    else:
        payload = np.ascontiguousarray(array, dtype="<f8").reshape(-1)
        version = VERSION_REAL
    fh.write(_HEADER.pack(MAGIC, version, *dims))
    fh.write(payload.tobytes())


def read_record(fh: BinaryIO) -> np.ndarray | None:
    """Read the next record; returns None at a clean end of file."""
    head = fh.read(_HEADER.size)
    if not head:
        return None
    if len(head) != _HEADER.size:
        raise FormatError("truncated RBTK header")
    magic, version, d0, d1, d2 = _HEADER.unpack(head)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    count = d0 * d1 * d2
    if version == VERSION_COMPLEX:
        raw = fh.read(count * 8)
        if len(raw) != count * 8:
            raise FormatError("truncated RBTK payload")
        vals = np.frombuffer(raw, dtype="<f4")
        out = (vals[0::2].astype(np.float32) + 1j * vals[1::2]).astype(np.complex64)
    elif version == VERSION_REAL:
        raw = fh.read(count * 8)
        if len(raw) != count * 8:
            raise FormatError("truncated RBTK payload")
        out = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    else:
        raise FormatError(f"unsupported RBTK version {version}")
    return out.reshape(d0, d1, d2)


def iter_records(path: str | os.PathLike) -> Iterator[np.ndarray]:
    with open(path, "rb") as fh:
        while (rec := read_record(fh)) is not None:
            yield rec


def read_records(path: str | os.PathLike) -> list[np.ndarray]:
    return list(iter_records(path))


def write_records(path: str | os.PathLike, arrays) -> None:
    with open(path, "wb") as fh:
        for arr in arrays:
            write_record(fh, arr)


def to_bytes(array: np.ndarray) -> bytes:
    buf = io.BytesIO()
    write_record(buf, array)
    return buf.getvalue()


def from_bytes(data: bytes) -> np.ndarray:
    rec = read_record(io.BytesIO(data))
    if rec is None:
        raise FormatError("empty buffer")
    return rec
