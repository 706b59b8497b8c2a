"""AEDB file writer/reader implementing the engine's interchange format.

Layout (little-endian, no padding): magic "AEDB", version u32 = 1,
tag u32 (0 = image-only, 1..16 = attribute index + 1), d u32, count u64,
then count rows of [id_len u16, id UTF-8, d x f32].
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from aedb_extract.templates import ATTRIBUTE_NAMES, attribute_index

MAGIC = b"AEDB"
VERSION = 1

_HEADER = struct.Struct("<4sIIIQ")
_ID_LEN = struct.Struct("<H")


def write_aedb(path, tag: str | None, ids, matrix) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    ids = list(ids)
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise ValueError(f"matrix shape {matrix.shape} does not match {len(ids)} ids")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate ids")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("non-finite embedding values")
    tag_code = 0 if tag is None else attribute_index(tag) + 1
    with open(Path(path), "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, tag_code, matrix.shape[1], len(ids)))
        for row_id, row in zip(ids, matrix):
            encoded = row_id.encode("utf-8")
            fh.write(_ID_LEN.pack(len(encoded)))
            fh.write(encoded)
            fh.write(row.tobytes())


def read_aedb(path):
    data = Path(path).read_bytes()
    magic, version, tag_code, dim, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    tag = None if tag_code == 0 else ATTRIBUTE_NAMES[tag_code - 1]
    ids, offset = [], _HEADER.size
    matrix = np.empty((count, dim), dtype=np.float32)
    for row in range(count):
        (id_len,) = _ID_LEN.unpack_from(data, offset)
        offset += _ID_LEN.size
        ids.append(data[offset : offset + id_len].decode("utf-8"))
        offset += id_len
        matrix[row] = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
        offset += 4 * dim
    if offset != len(data):
        raise ValueError("trailing bytes")
    return tag, ids, matrix
