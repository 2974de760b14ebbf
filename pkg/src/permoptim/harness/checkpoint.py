"""Binary checkpoint format.

Layout (all integers unsigned 64-bit little-endian)::

    b"POPT1\\n"
    array count
    per array: name length, name (UTF-8), rank, dims..., float64 LE payload
    config snapshot: UTF-8 ``key = value`` text to end of file
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"POPT1\n"


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    arrays: dict[str, np.ndarray]
    config_text: str


def encode(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack("<Q", len(ckpt.arrays))]
    for name in sorted(ckpt.arrays):
        arr = np.asarray(ckpt.arrays[name], dtype="<f8")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<Q", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack(f"<{1 + arr.ndim}Q", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    parts.append(ckpt.config_text.encode("utf-8"))
    return b"".join(parts)


def decode(raw: bytes) -> Checkpoint:
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"magic mismatch: expected {MAGIC!r}, found {raw[:len(MAGIC)]!r}")
    pos = len(MAGIC)

    def read_u64(count=1):
        nonlocal pos
        end = pos + 8 * count
        if end > len(raw):
            raise CheckpointError(f"truncated checkpoint at offset {pos}")
        vals = struct.unpack_from(f"<{count}Q", raw, pos)
        pos = end
        return vals

    (count,) = read_u64()
    arrays = {}
    for _ in range(count):
        (name_len,) = read_u64()
        if pos + name_len > len(raw):
            raise CheckpointError(f"truncated array name at offset {pos}")
        name = _utf8(raw[pos: pos + name_len], pos)
        pos += name_len
        (rank,) = read_u64()
        shape = read_u64(rank) if rank else ()
        size = int(np.prod(shape)) if rank else 1
        end = pos + 8 * size
        if end > len(raw):
            raise CheckpointError(f"truncated payload for {name!r} at offset {pos}")
        arrays[name] = np.frombuffer(raw, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
        pos = end
    return Checkpoint(arrays, _utf8(raw[pos:], pos))


def _utf8(raw: bytes, offset: int) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        raise CheckpointError(f"invalid UTF-8 at offset {offset}") from None


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(path, ckpt: Checkpoint) -> None:
    atomic_write(path, encode(ckpt))


def load(path) -> Checkpoint:
    return decode(Path(path).read_bytes())
