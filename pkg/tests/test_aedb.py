import hashlib
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lesionseek.aedb import read_embeddings, write_embeddings, MAGIC, VERSION
from lesionseek.errors import (
    AedbBadMagic,
    AedbDuplicateIds,
    AedbError,
    AedbTruncated,
    AedbVersionMismatch,
)


def test_basic_round_trip_bitwise(tmp_path):
    path = tmp_path / "t.aedb"
    matrix = np.arange(24, dtype=np.float32).reshape(3, 8) / 7.0
    write_embeddings(path, None, ["a", "b", "c"], matrix)
    tag, ids, back = read_embeddings(path)
    assert tag is None
    assert ids == ["a", "b", "c"]
    assert back.dtype == np.float32
    assert np.array_equal(back, matrix)


def test_attribute_tag_round_trip(tmp_path):
    path = tmp_path / "t.aedb"
    write_embeddings(path, "deltaB", ["x"], np.ones((1, 4), dtype=np.float32))
    tag, _, _ = read_embeddings(path)
    assert tag == "deltaB"
    header = path.read_bytes()[:16]
    magic, version, tag_code, d = struct.unpack("<4sIII", header)
    assert magic == MAGIC and version == VERSION
    assert tag_code == 5  # attribute_index("deltaB") + 1
    assert d == 4


def test_large_random_round_trip_hash(tmp_path):
    rng = np.random.default_rng(0)
    matrix = rng.standard_normal((10_000, 64)).astype(np.float32)
    ids = [f"img{i:06d}" for i in range(10_000)]
    path = tmp_path / "big.aedb"
    write_embeddings(path, "areaMM2", ids, matrix)
    _, back_ids, back = read_embeddings(path)
    assert back_ids == ids
    assert hashlib.sha256(back.tobytes()).hexdigest() == hashlib.sha256(matrix.tobytes()).hexdigest()


def test_unicode_ids(tmp_path):
    path = tmp_path / "u.aedb"
    ids = ["Läsion-1", "病变-2"]
    write_embeddings(path, None, ids, np.ones((2, 3), np.float32))
    _, back_ids, _ = read_embeddings(path)
    assert back_ids == ids


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.aedb"
    write_embeddings(path, None, ["a"], np.ones((1, 4), np.float32))
    data = bytearray(path.read_bytes())
    data[:4] = b"XXXX"
    path.write_bytes(bytes(data))
    with pytest.raises(AedbBadMagic, match="bad magic"):
        read_embeddings(path)


def test_version_mismatch(tmp_path):
    path = tmp_path / "v.aedb"
    write_embeddings(path, None, ["a"], np.ones((1, 4), np.float32))
    data = bytearray(path.read_bytes())
    data[4:8] = struct.pack("<I", 2)
    path.write_bytes(bytes(data))
    with pytest.raises(AedbVersionMismatch):
        read_embeddings(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "t.aedb"
    write_embeddings(path, None, ["a", "b"], np.ones((2, 4), np.float32))
    blob = path.read_bytes()
    path.write_bytes(blob[:-5])
    with pytest.raises(AedbTruncated):
        read_embeddings(path)
    path.write_bytes(blob[:10])
    with pytest.raises(AedbTruncated):
        read_embeddings(path)


def test_trailing_garbage_rejected(tmp_path):
    path = tmp_path / "t.aedb"
    write_embeddings(path, None, ["a"], np.ones((1, 4), np.float32))
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(AedbError, match="trailing"):
        read_embeddings(path)


def test_duplicate_ids_rejected_on_write(tmp_path):
    with pytest.raises(AedbDuplicateIds):
        write_embeddings(tmp_path / "d.aedb", None, ["a", "a"], np.ones((2, 4), np.float32))


def test_duplicate_ids_rejected_on_read(tmp_path):
    # forge a file with duplicate ids
    path = tmp_path / "d.aedb"
    row = struct.pack("<H", 1) + b"a" + struct.pack("<2f", 1.0, 2.0)
    header = struct.pack("<4sIIIQ", MAGIC, VERSION, 0, 2, 2)
    path.write_bytes(header + row + row)
    with pytest.raises(AedbDuplicateIds):
        read_embeddings(path)


def test_mismatched_ids_and_rows():
    with pytest.raises(AedbError, match="ids but"):
        write_embeddings("/dev/null", None, ["a"], np.ones((2, 4), np.float32))


def test_non_finite_rejected(tmp_path):
    matrix = np.ones((1, 4), np.float32)
    matrix[0, 2] = np.nan
    with pytest.raises(AedbError, match="non-finite"):
        write_embeddings(tmp_path / "n.aedb", None, ["a"], matrix)


@given(
    st.integers(min_value=1, max_value=40),
    st.integers(min_value=2, max_value=24),
    st.integers(min_value=0, max_value=2**31),
)
@settings(max_examples=40, deadline=None)
def test_round_trip_property(count, dim, seed):
    import io, os, tempfile

    rng = np.random.default_rng(seed)
    matrix = rng.standard_normal((count, dim)).astype(np.float32)
    ids = [f"id{i}" for i in range(count)]
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "x.aedb")
        write_embeddings(path, "B", ids, matrix)
        tag, back_ids, back = read_embeddings(path)
    assert tag == "B"
    assert back_ids == ids
    assert np.array_equal(back, matrix)
