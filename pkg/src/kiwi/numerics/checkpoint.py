"""Binary parameter checkpoints.

Layout (all integers little-endian)::

    magic      8 bytes   b"KIWICKPT"
    version    uint32    currently 1
    count      uint32    number of tensors
    count times:
      name_len uint32
      name     name_len bytes, UTF-8
      ndim     uint32
      dims     ndim x uint64
      values   prod(dims) x float64 (IEEE-754, little-endian, row-major)
    crc32      uint32    zlib.crc32 of every preceding byte

Readers reject a different magic, an unknown version, short reads, trailing
bytes and checksum mismatches with :class:`CheckpointFormatError`.
"""
from __future__ import annotations

import io
import os
import struct
import zlib
from typing import Mapping

import numpy as np

MAGIC = b"KIWICKPT"
VERSION = 1


class CheckpointFormatError(ValueError):
    pass


def dumps(tensors: Mapping[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(tensors)))
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes(order="C"))
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def loads(blob: bytes) -> dict[str, np.ndarray]:
    if len(blob) < len(MAGIC) + 12:
        raise CheckpointFormatError("checkpoint truncated: header incomplete")
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointFormatError("not a checkpoint file (bad magic)")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    version, count = struct.unpack_from("<II", body, len(MAGIC))
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version} (expected {VERSION})")
    pos = len(MAGIC) + 8

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(body):
            raise CheckpointFormatError("checkpoint truncated")
        chunk = body[pos : pos + n]
        pos += n
        return chunk

    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        n = int(np.prod(dims)) if ndim else 1
        values = np.frombuffer(take(8 * n), dtype="<f8").astype(np.float64)
        out[name] = values.reshape(dims)
    if pos != len(body):
        raise CheckpointFormatError("checkpoint has trailing bytes")
    if zlib.crc32(body) != crc:
        raise CheckpointFormatError("checkpoint checksum mismatch")
    return out


def save(path: str | os.PathLike, tensors: Mapping[str, np.ndarray]) -> None:
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(dumps(tensors))
    os.replace(tmp, path)


def load(path: str | os.PathLike) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return loads(fh.read())
