"""Byte-level checks of the PEMB writer against a hand-rolled parser."""

import json
import struct
import zlib

import numpy as np
import pytest

from pembx.errors import WriteError
from pembx.pemb import MAGIC, VERSION, pemb_filename, write_pemb

HEADER = struct.Struct("<4sIIII")


def parse_pemb(path):
    """Independent decode: header, metadata, payload, CRC."""
    blob = path.read_bytes()
    magic, version, dim, frames, meta_len = HEADER.unpack_from(blob, 0)
    meta_start = HEADER.size
    payload_start = meta_start + meta_len
    payload_len = frames * dim * 4
    trailer_start = payload_start + payload_len
    assert len(blob) == trailer_start + 4
    meta = json.loads(blob[meta_start:payload_start])
    payload = np.frombuffer(blob[payload_start:trailer_start], dtype="<f4").reshape(frames, dim)
    (crc,) = struct.unpack_from("<I", blob, trailer_start)
    assert crc == zlib.crc32(blob[:trailer_start]) & 0xFFFFFFFF
    return magic, version, dim, frames, meta, payload


def test_filename_convention():
    assert pemb_filename("seg_0001", "steinway_d") == "seg_0001__steinway_d.pemb"


def test_written_bytes_decode_exactly(tmp_path):
    data = np.arange(24, dtype=np.float32).reshape(6, 4) / 7.0
    path = tmp_path / "x.pemb"
    nbytes = write_pemb(path, "seg_a", "yamaha_c5", [9, 10], data)
    assert nbytes == path.stat().st_size

    magic, version, dim, frames, meta, payload = parse_pemb(path)
    assert magic == MAGIC == b"PEMB"
    assert version == VERSION == 1
    assert (dim, frames) == (4, 6)
    assert meta == {"layer_set": [9, 10], "rendition": "yamaha_c5", "segment_id": "seg_a"}
    assert np.array_equal(payload, data)


def test_metadata_is_canonical_json(tmp_path):
    path = tmp_path / "m.pemb"
    write_pemb(path, "s", "r", [1], np.ones((2, 3), dtype=np.float32))
    blob = path.read_bytes()
    _, _, _, _, meta_len = HEADER.unpack_from(blob, 0)
    raw_meta = blob[HEADER.size : HEADER.size + meta_len]
    # sorted keys, compact separators, no trailing whitespace
    assert raw_meta == b'{"layer_set":[1],"rendition":"r","segment_id":"s"}'


def test_write_is_deterministic(tmp_path):
    data = np.linspace(-1, 1, 30, dtype=np.float32).reshape(5, 6)
    a = tmp_path / "a.pemb"
    b = tmp_path / "b.pemb"
    write_pemb(a, "seg", "rend", [3, 4], data)
    write_pemb(b, "seg", "rend", [3, 4], data)
    assert a.read_bytes() == b.read_bytes()


def test_float64_input_is_downcast(tmp_path):
    data = np.random.default_rng(5).normal(size=(3, 2))
    path = tmp_path / "d.pemb"
    write_pemb(path, "s", "r", [1, 2], data)
    *_, payload = parse_pemb(path)
    assert np.array_equal(payload, data.astype(np.float32))


@pytest.mark.parametrize(
    "layers,data,message",
    [
        ([], np.ones((2, 2), dtype=np.float32), "must not be empty"),
        ([0, 1], np.ones((2, 2), dtype=np.float32), "1-based"),
        ([-3], np.ones((2, 2), dtype=np.float32), "1-based"),
        ([2, 2], np.ones((2, 2), dtype=np.float32), "duplicates"),
        ([1], np.ones(4, dtype=np.float32), "2-D"),
        ([1], np.ones((0, 4), dtype=np.float32), "non-empty"),
        ([1, 2, 3], np.ones((2, 4), dtype=np.float32), "not divisible"),
        ([1], np.array([[1.0, np.nan]], dtype=np.float32), "non-finite"),
        ([1], np.array([[np.inf, 0.0]], dtype=np.float32), "non-finite"),
    ],
)
def test_invariant_violations_rejected(tmp_path, layers, data, message):
    with pytest.raises(WriteError, match=message):
        write_pemb(tmp_path / "bad.pemb", "s", "r", layers, data)
    assert not (tmp_path / "bad.pemb").exists()
