"""AEDB embedding-file format: the interchange surface for embedding rows.

Layout (little-endian, no padding):

    magic   4 bytes  b"AEDB"
    version u32      1
    tag     u32      0 = image-only, 1..16 = attribute_index + 1
    d       u32      embedding dimension
    count   u64      number of rows
    rows    count x [id_len u16, id bytes UTF-8, d x f32]
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from lesionseek.core import N_ATTRIBUTES, attribute_from_index, attribute_index
from lesionseek.errors import (
    AedbBadMagic,
    AedbDuplicateIds,
    AedbError,
    AedbTruncated,
    AedbVersionMismatch,
)

MAGIC = b"AEDB"
VERSION = 1

IMAGE_ONLY_TAG = None  # tag value used at the API level for image-only files

_HEADER = struct.Struct("<4sIIIQ")
_ID_LEN = struct.Struct("<H")


def tag_to_code(tag: str | None) -> int:
    if tag is None:
        return 0
    return attribute_index(tag) + 1


def tag_from_code(code: int) -> str | None:
    if code == 0:
        return None
    if not 1 <= code <= N_ATTRIBUTES:
        raise AedbError(f"tag code out of range: {code}")
    return attribute_from_index(code - 1)


def write_embeddings(path, tag: str | None, ids, vectors) -> None:
    """Write one embedding database; rows are stored as float32.

    ``tag`` is None for an image-only database or an attribute name.
    """
    matrix = np.ascontiguousarray(vectors, dtype="<f4")
    ids = list(ids)
    if matrix.ndim != 2:
        raise AedbError(f"vectors must be a 2-d matrix, got shape {matrix.shape}")
    if len(ids) != matrix.shape[0]:
        raise AedbError(f"{len(ids)} ids but {matrix.shape[0]} rows")
    if matrix.shape[1] < 2:
        raise AedbError(f"dimension must be at least 2, got {matrix.shape[1]}")
    if len(set(ids)) != len(ids):
        raise AedbDuplicateIds("duplicate ids in embedding database")
    if not np.all(np.isfinite(matrix)):
        raise AedbError("non-finite embedding values")

    with open(Path(path), "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, tag_to_code(tag), matrix.shape[1], len(ids)))
        for row_id, row in zip(ids, matrix):
            encoded = row_id.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise AedbError(f"id too long: {row_id[:32]!r}...")
            fh.write(_ID_LEN.pack(len(encoded)))
            fh.write(encoded)
            fh.write(row.tobytes())


def read_embeddings(path):
    """Read an AEDB file; returns (tag, ids, float32 matrix)."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise AedbTruncated(f"{path}: truncated header")
    magic, version, tag_code, dim, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise AedbBadMagic(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise AedbVersionMismatch(f"{path}: unsupported version {version}")
    tag = tag_from_code(tag_code)
    if dim < 2:
        raise AedbError(f"{path}: dimension {dim} below minimum of 2")

    ids = []
    matrix = np.empty((count, dim), dtype=np.float32)
    offset = _HEADER.size
    row_bytes = 4 * dim
    for row in range(count):
        if offset + _ID_LEN.size > len(data):
            raise AedbTruncated(f"{path}: truncated at row {row}")
        (id_len,) = _ID_LEN.unpack_from(data, offset)
        offset += _ID_LEN.size
        if offset + id_len + row_bytes > len(data):
            raise AedbTruncated(f"{path}: truncated at row {row}")
        ids.append(data[offset : offset + id_len].decode("utf-8"))
        offset += id_len
        matrix[row] = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
        offset += row_bytes
    if offset != len(data):
        raise AedbError(f"{path}: {len(data) - offset} trailing bytes")
    if len(set(ids)) != len(ids):
        raise AedbDuplicateIds(f"{path}: duplicate ids")
    return tag, ids, matrix
