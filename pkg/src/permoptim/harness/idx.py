"""Reader for the IDX binary format used by the MNIST distribution."""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IDXFormatError(ValueError):
    pass


def parse_idx(raw: bytes) -> np.ndarray:
    """Decode IDX bytes.  Image files are scaled to ``[0, 1]``; labels stay integer."""
    if len(raw) < 4:
        raise IDXFormatError("truncated header at offset 0")
    (magic,) = struct.unpack_from(">I", raw, 0)
    if magic == IMAGES_MAGIC:
        ndim = 3
    elif magic == LABELS_MAGIC:
        ndim = 1
    else:
        raise IDXFormatError(f"bad magic 0x{magic:08x} at offset 0")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IDXFormatError("truncated dimension sizes at offset 4")
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    count = int(np.prod(dims))
    payload = raw[header:]
    if len(payload) < count:
        raise IDXFormatError(
            f"truncated payload at offset {header + len(payload)}: "
            f"expected {count} bytes, found {len(payload)}"
        )
    data = np.frombuffer(payload, dtype=np.uint8, count=count).reshape(dims)
    if magic == IMAGES_MAGIC:
        return data.astype(np.float64) / 255.0
    return data.astype(np.int64)


def load_idx(path) -> np.ndarray:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return parse_idx(fh.read())
