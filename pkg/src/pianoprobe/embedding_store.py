"""Binary embedding file format (PEMB) and layer stitching.

One ``.pemb`` file stores the frame embeddings of a single
(segment, rendition) pair. Layout, all integers and floats little-endian:

====================  =======================================================
bytes                 content
====================  =======================================================
0..19                 header: magic ``PEMB`` | u32 version (=1) | u32 dim |
                      u32 frames | u32 meta_len
20..20+meta_len       UTF-8 JSON metadata: segment_id, rendition, layer_set
...                   frames x dim float32 payload, row-major
last 4                CRC32 (IEEE/zlib) of every preceding byte
====================  =======================================================

The CRC trailer means any single-byte corruption of a stored file is
rejected instead of being silently read back as different data. Floats are
stored as 32-bit (what encoders emit) and promoted to 64-bit by consumers.

Filename convention: ``<segment_id>__<rendition>.pemb``.
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import (
    AlignmentError,
    ContractError,
    CorruptionError,
    DataError,
    FormatError,
    MissingLayerError,
    StoreIOError,
    UnsupportedVersionError,
)

MAGIC = b"PEMB"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")
HEADER_SIZE = _HEADER.size  # 20 bytes
CRC_SIZE = 4


@dataclass(eq=False)
class EmbeddingSequence:
    """Frame embeddings of one (segment, rendition): a frames x dim matrix.

    ``layer_set`` records which encoder layers were column-concatenated to
    build the matrix; every layer contributes dim / len(layer_set) columns.
    """

    segment_id: str
    rendition: str
    layer_set: tuple[int, ...]
    data: np.ndarray  # frames x dim, float32

    def __post_init__(self):
        self.layer_set = tuple(int(l) for l in self.layer_set)
        self.data = np.asarray(self.data, dtype=np.float32)

    @property
    def frames(self) -> int:
        return int(self.data.shape[0])

    @property
    def dim(self) -> int:
        return int(self.data.shape[1]) if self.data.ndim == 2 else 0

    def validate(self) -> None:
        """Raise a typed error when any structural invariant is broken."""
        if self.data.ndim != 2:
            raise ContractError(f"embedding data must be 2-D, got ndim={self.data.ndim}")
        if self.frames < 1 or self.dim < 1:
            raise ContractError(
                f"embedding must have frames >= 1 and dim >= 1, got {self.frames}x{self.dim}"
            )
        if not self.layer_set:
            raise ContractError("layer_set must name at least one layer")
        if any(l <= 0 for l in self.layer_set):
            raise ContractError(f"layer indices must be positive, got {self.layer_set}")
        if len(set(self.layer_set)) != len(self.layer_set):
            raise ContractError(f"layer_set has repeated layers: {self.layer_set}")
        if self.dim % len(self.layer_set) != 0:
            raise ContractError(
                f"dim {self.dim} is not divisible by layer count {len(self.layer_set)}"
            )
        bad = ~np.isfinite(self.data)
        if bad.any():
            row, col = map(int, np.argwhere(bad)[0])
            raise DataError(
                f"non-finite embedding value at row {row}, col {col}", row=row, col=col
            )

    def equals(self, other: "EmbeddingSequence") -> bool:
        """Bit-exact equality on metadata and the float32 payload."""
        return (
            self.segment_id == other.segment_id
            and self.rendition == other.rendition
            and self.layer_set == other.layer_set
            and self.data.shape == other.data.shape
            and bool(np.array_equal(
                self.data.view(np.uint32), other.data.view(np.uint32)
            ))
        )


def embedding_filename(segment_id: str, rendition: str) -> str:
    return f"{segment_id}__{rendition}.pemb"


def write_embedding(seq: EmbeddingSequence, destination: BinaryIO) -> int:
    """Serialize ``seq`` to a byte sink; returns total bytes written."""
    seq.validate()
    meta = json.dumps(
        {
            "segment_id": seq.segment_id,
            "rendition": seq.rendition,
            "layer_set": list(seq.layer_set),
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    header = _HEADER.pack(MAGIC, VERSION, seq.dim, seq.frames, len(meta))
    payload = np.ascontiguousarray(seq.data, dtype="<f4").tobytes()
    crc = struct.pack("<I", zlib.crc32(header + meta + payload) & 0xFFFFFFFF)

    written = 0
    for chunk in (header, meta, payload, crc):
        try:
            destination.write(chunk)
        except OSError as exc:
            raise StoreIOError(
                f"sink failure after {written} bytes: {exc}", byte_offset=written
            ) from exc
        written += len(chunk)
    return written


def write_embedding_file(seq: EmbeddingSequence, path: str | Path) -> int:
    path = Path(path)
    with open(path, "wb") as fh:
        return write_embedding(seq, fh)


def _read_exact(source: BinaryIO, n: int, what: str, offset: int) -> bytes:
    try:
        buf = source.read(n)
    except OSError as exc:
        raise StoreIOError(
            f"source failure at byte {offset}: {exc}", byte_offset=offset
        ) from exc
    if buf is None or len(buf) != n:
        got = 0 if buf is None else len(buf)
        raise CorruptionError(
            f"truncated {what}: expected {n} bytes at offset {offset}, got {got}"
        )
    return buf


def read_embedding(source: BinaryIO) -> EmbeddingSequence:
    """Parse one embedding record from a byte source.

    Validates magic, version, byte counts, the CRC trailer, metadata
    schema, and payload finiteness, each with its own error type.
    """
    header = _read_exact(source, HEADER_SIZE, "header", 0)
    magic, version, dim, frames, meta_len = _HEADER.unpack(header)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported format version {version}, expected {VERSION}")
    if dim < 1 or frames < 1:
        raise CorruptionError(f"header declares empty payload: frames={frames} dim={dim}")

    offset = HEADER_SIZE
    meta_raw = _read_exact(source, meta_len, "metadata", offset)
    offset += meta_len
    payload_len = frames * dim * 4
    payload = _read_exact(source, payload_len, "payload", offset)
    offset += payload_len
    crc_raw = _read_exact(source, CRC_SIZE, "checksum trailer", offset)

    (stored_crc,) = struct.unpack("<I", crc_raw)
    actual_crc = zlib.crc32(header + meta_raw + payload) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise CorruptionError(
            f"checksum mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )

    try:
        meta = json.loads(meta_raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"metadata is not valid UTF-8 JSON: {exc}") from exc
    for key in ("segment_id", "rendition", "layer_set"):
        if key not in meta:
            raise FormatError(f"metadata missing required key {key!r}")

    data = np.frombuffer(payload, dtype="<f4").reshape(frames, dim).copy()
    seq = EmbeddingSequence(
        segment_id=str(meta["segment_id"]),
        rendition=str(meta["rendition"]),
        layer_set=tuple(int(l) for l in meta["layer_set"]),
        data=data,
    )
    seq.validate()
    return seq


def read_embedding_file(path: str | Path) -> EmbeddingSequence:
    with open(path, "rb") as fh:
        return read_embedding(fh)


def read_embedding_bytes(blob: bytes) -> EmbeddingSequence:
    return read_embedding(io.BytesIO(blob))


def _check_same_provenance(seqs: list[EmbeddingSequence]) -> None:
    first = seqs[0]
    for seq in seqs[1:]:
        if seq.segment_id != first.segment_id or seq.rendition != first.rendition:
            raise AlignmentError(
                "layer inputs disagree on identity: "
                f"({first.segment_id!r}, {first.rendition!r}) vs "
                f"({seq.segment_id!r}, {seq.rendition!r})"
            )
        if seq.frames != first.frames:
            raise AlignmentError(
                f"frame-count mismatch across layers: {first.frames} vs {seq.frames}"
            )


def concat_layers(per_layer: list[EmbeddingSequence], layers: list[int]) -> EmbeddingSequence:
    """Column-concatenate single-layer sequences in ascending layer order."""
    if not per_layer:
        raise ContractError("concat_layers needs at least one input sequence")
    if not layers:
        raise ContractError("concat_layers needs at least one requested layer")
    by_layer: dict[int, EmbeddingSequence] = {}
    for seq in per_layer:
        if len(seq.layer_set) != 1:
            raise ContractError(
                f"concat_layers inputs must be single-layer, got layer_set={seq.layer_set}"
            )
        by_layer[seq.layer_set[0]] = seq

    wanted = sorted(int(l) for l in layers)
    missing = [l for l in wanted if l not in by_layer]
    if missing:
        raise MissingLayerError(f"requested layers absent from inputs: {missing}")

    chosen = [by_layer[l] for l in wanted]
    _check_same_provenance(chosen)
    data = np.hstack([seq.data for seq in chosen])
    return EmbeddingSequence(
        segment_id=chosen[0].segment_id,
        rendition=chosen[0].rendition,
        layer_set=tuple(wanted),
        data=data,
    )


def select_layers(seq: EmbeddingSequence, layers: list[int]) -> EmbeddingSequence:
    """Slice a subset of layers out of an already-concatenated sequence.

    The file format stores equal-width layer blocks in ascending order, so
    a layer subset is a column slice. Lets one stored layer superset back
    every layer-range ablation value without re-extracting.
    """
    wanted = sorted(int(l) for l in layers)
    missing = [l for l in wanted if l not in seq.layer_set]
    if missing:
        raise MissingLayerError(
            f"layers {missing} not in stored layer_set {list(seq.layer_set)}"
        )
    if tuple(wanted) == seq.layer_set:
        return seq
    width = seq.dim // len(seq.layer_set)
    cols: list[np.ndarray] = []
    for l in wanted:
        i = seq.layer_set.index(l)
        cols.append(seq.data[:, i * width:(i + 1) * width])
    return EmbeddingSequence(
        segment_id=seq.segment_id,
        rendition=seq.rendition,
        layer_set=tuple(wanted),
        data=np.hstack(cols),
    )
