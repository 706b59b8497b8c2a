"""Embedding databases with exact flat cosine top-k search."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from lesionseek.aedb import read_embeddings, write_embeddings
from lesionseek.core import LesionImage
from lesionseek.embedding import EmbeddingProvider
from lesionseek.errors import DataError

_NORM_TOLERANCE = 1e-6


@dataclass
class EmbeddingDatabase:
    """Rows of unit-norm embeddings keyed by image id.

    ``tag`` is None for an image-only database or an attribute name for a
    specialized one.
    """

    tag: str | None
    ids: list[str]
    matrix: np.ndarray  # |ids| x d, float32, rows L2-normalized

    def __post_init__(self):
        if self.matrix.ndim != 2:
            raise DataError(f"matrix must be 2-d, got shape {self.matrix.shape}")
        if len(self.ids) != self.matrix.shape[0]:
            raise DataError(f"{len(self.ids)} ids but {self.matrix.shape[0]} rows")
        if len(self.ids) < 1:
            raise DataError("a queryable database needs at least one row")
        if len(set(self.ids)) != len(self.ids):
            raise DataError("duplicate ids in database")
        norms = np.linalg.norm(self.matrix.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > _NORM_TOLERANCE):
            raise DataError("database rows must be L2-normalized")

    @property
    def d(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self) -> int:
        return len(self.ids)


def build_database(
    provider: EmbeddingProvider, images: Iterable[LesionImage], tag: str | None
) -> EmbeddingDatabase:
    """Embed every image in order; tag selects the embedding flavour."""
    ids: list[str] = []
    rows: list[np.ndarray] = []
    for image in images:
        try:
            if tag is None:
                vector = provider.embed_image(image)
            else:
                vector = provider.embed_image_attribute(image, tag)
        except Exception as exc:
            raise DataError(f"provider failed on image {image.image_id!r}: {exc}") from exc
        ids.append(image.image_id)
        rows.append(np.asarray(vector, dtype=np.float32))
    if not ids:
        raise DataError("cannot build a database from an empty image set")
    return EmbeddingDatabase(tag=tag, ids=ids, matrix=np.stack(rows))


def build_databases(
    provider: EmbeddingProvider, images: Iterable[LesionImage], tags: list[str | None]
) -> dict[str | None, EmbeddingDatabase]:
    """Build several databases in a single pass over the images."""
    ids: list[str] = []
    rows: dict[str | None, list[np.ndarray]] = {tag: [] for tag in tags}
    for image in images:
        ids.append(image.image_id)
        for tag in tags:
            if tag is None:
                vector = provider.embed_image(image)
            else:
                vector = provider.embed_image_attribute(image, tag)
            rows[tag].append(np.asarray(vector, dtype=np.float32))
    if not ids:
        raise DataError("cannot build a database from an empty image set")
    return {
        tag: EmbeddingDatabase(tag=tag, ids=list(ids), matrix=np.stack(rows[tag]))
        for tag in tags
    }


def top_k(db: EmbeddingDatabase, query: np.ndarray, k: int) -> list[tuple[str, float]]:
    """Exact cosine top-k: (id, similarity) sorted by similarity descending,
    ties broken by ascending id."""
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (db.d,):
        raise DataError(f"query dimension {query.shape} does not match database d={db.d}")
    if not 1 <= k <= len(db):
        raise DataError(f"k must lie in [1, {len(db)}], got {k}")
    query_norm = np.linalg.norm(query)
    if not query_norm > 0:
        raise DataError("cosine similarity undefined for an all-zero query")

    matrix = db.matrix.astype(np.float64)
    similarities = (matrix @ query) / (query_norm * np.linalg.norm(matrix, axis=1))
    order = np.lexsort((np.asarray(db.ids), -similarities))[:k]
    return [(db.ids[i], float(similarities[i])) for i in order]


def save_database(db: EmbeddingDatabase, path) -> None:
    write_embeddings(path, db.tag, db.ids, db.matrix)


def load_database(path) -> EmbeddingDatabase:
    tag, ids, matrix = read_embeddings(path)
    return EmbeddingDatabase(tag=tag, ids=ids, matrix=matrix)


def database_filename(tag: str | None, provider_kind: str = "tuned") -> str:
    """Canonical file name inside a database directory."""
    if provider_kind == "untuned":
        return "untuned.aedb"
    return "image.aedb" if tag is None else f"{tag}.aedb"


def database_path(db_dir, tag: str | None, provider_kind: str = "tuned") -> Path:
    return Path(db_dir) / database_filename(tag, provider_kind)
