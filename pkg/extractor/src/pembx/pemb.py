"""Writer for the PEMB frame-embedding interchange format.

One file holds one segment/rendition pair. Byte layout, all
little-endian:

    header   struct "<4sIIII": magic b"PEMB", version 1, dim,
             frame count, metadata byte length
    metadata canonical JSON (sorted keys, no spaces) with layer_set,
             rendition and segment_id
    payload  frames x dim float32, row-major
    trailer  CRC32 (zlib) over header + metadata + payload, 4 bytes

The reader on the consuming side verifies the CRC and rejects files
whose dim is not a multiple of the layer count, so those invariants
are enforced here before anything hits disk.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import WriteError

MAGIC = b"PEMB"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")


def pemb_filename(segment_id: str, rendition: str) -> str:
    return f"{segment_id}__{rendition}.pemb"


def write_pemb(
    path: str | Path,
    segment_id: str,
    rendition: str,
    layer_set: Sequence[int],
    data: np.ndarray,
) -> int:
    """Serialize one embedding matrix; returns the number of bytes written."""
    layers = [int(layer) for layer in layer_set]
    if not layers:
        raise WriteError("layer_set must not be empty")
    if any(layer < 1 for layer in layers):
        raise WriteError("layer indices are 1-based and must be positive")
    if len(set(layers)) != len(layers):
        raise WriteError("layer_set contains duplicates")
    matrix = np.ascontiguousarray(data, dtype="<f4")
    if matrix.ndim != 2:
        raise WriteError(f"embedding matrix must be 2-D, got {matrix.ndim}-D")
    frames, dim = matrix.shape
    if frames < 1 or dim < 1:
        raise WriteError(f"embedding matrix must be non-empty, got shape {matrix.shape}")
    if dim % len(layers) != 0:
        raise WriteError(f"dim {dim} is not divisible by the {len(layers)} layers")
    if not np.isfinite(matrix).all():
        raise WriteError("embedding matrix contains non-finite values")

    meta = json.dumps(
        {"layer_set": layers, "rendition": rendition, "segment_id": segment_id},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    header = _HEADER.pack(MAGIC, VERSION, dim, frames, len(meta))
    payload = matrix.tobytes()
    body = header + meta + payload
    trailer = struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)

    target = Path(path)
    target.write_bytes(body + trailer)
    return len(body) + 4
