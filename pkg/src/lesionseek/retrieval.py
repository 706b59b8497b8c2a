"""The three retrieval strategies: image-only, attribute-specialized, and
two-stage hierarchical (image-only prefilter, attribute rerank)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from lesionseek.core import LesionImage
from lesionseek.embedding import EmbeddingProvider
from lesionseek.errors import DataError
from lesionseek.store import EmbeddingDatabase, build_database, top_k

# Stage-2 source for hierarchical search: either a prebuilt full attribute
# database to slice rows from, or a loader that yields images by id so the
# temporary database can be embedded on the fly.
ImageLoader = Callable[[str], LesionImage]
StageTwoSource = Union[EmbeddingDatabase, ImageLoader]


@dataclass
class RetrievalResult:
    query_id: str
    strategy: str
    hits: list[tuple[str, float]]  # (image_id, cosine similarity), best first

    def hit_ids(self) -> list[str]:
        return [image_id for image_id, _ in self.hits]


def _query_db(
    db: EmbeddingDatabase,
    query_vector: np.ndarray,
    query_id: str,
    k: int,
    exclude_query: bool,
) -> list[tuple[str, float]]:
    overfetch = k
    if exclude_query and query_id in set(db.ids):
        overfetch = min(k + 1, len(db))
    hits = top_k(db, query_vector, overfetch)
    if exclude_query:
        hits = [(i, s) for i, s in hits if i != query_id]
    return hits[:k]


def search_image_only(
    query: LesionImage,
    provider: EmbeddingProvider,
    db_im: EmbeddingDatabase,
    k: int,
    exclude_query: bool = False,
) -> RetrievalResult:
    if db_im.tag is not None:
        raise DataError(f"expected an image-only database, got tag {db_im.tag!r}")
    hits = _query_db(db_im, provider.embed_image(query), query.image_id, k, exclude_query)
    return RetrievalResult(query_id=query.image_id, strategy="image", hits=hits)


def search_attribute(
    query: LesionImage,
    attribute: str,
    provider: EmbeddingProvider,
    db_attr: EmbeddingDatabase,
    k: int,
    exclude_query: bool = False,
) -> RetrievalResult:
    if db_attr.tag != attribute:
        raise DataError(
            f"database tag {db_attr.tag!r} does not match requested attribute {attribute!r}"
        )
    vector = provider.embed_image_attribute(query, attribute)
    hits = _query_db(db_attr, vector, query.image_id, k, exclude_query)
    return RetrievalResult(
        query_id=query.image_id, strategy=f"attribute({attribute})", hits=hits
    )


def search_hierarchical(
    query: LesionImage,
    attribute: str,
    provider: EmbeddingProvider,
    db_im: EmbeddingDatabase,
    stage_two: StageTwoSource,
    k: int,
    b: int,
    exclude_query: bool = False,
) -> RetrievalResult:
    """Prefilter b visually similar candidates, rerank them by attribute.

    The stage-2 database covers exactly the stage-1 candidates; it is built
    on the fly from a loader, or sliced out of a prebuilt full attribute
    database (which is equivalent because providers are deterministic).
    """
    if db_im.tag is not None:
        raise DataError(f"expected an image-only database, got tag {db_im.tag!r}")
    if k > b:
        raise DataError(f"k ({k}) must not exceed b ({b})")
    if b > len(db_im):
        raise DataError(f"b ({b}) exceeds database size ({len(db_im)})")

    stage_one = _query_db(
        db_im, provider.embed_image(query), query.image_id, b, exclude_query
    )
    candidate_ids = [image_id for image_id, _ in stage_one]

    if isinstance(stage_two, EmbeddingDatabase):
        if stage_two.tag != attribute:
            raise DataError(
                f"stage-2 database tag {stage_two.tag!r} does not match {attribute!r}"
            )
        index_by_id = {image_id: i for i, image_id in enumerate(stage_two.ids)}
        missing = [i for i in candidate_ids if i not in index_by_id]
        if missing:
            raise DataError(f"stage-2 database is missing candidates: {missing[:5]}")
        rows = stage_two.matrix[[index_by_id[i] for i in candidate_ids]]
        temp_db = EmbeddingDatabase(tag=attribute, ids=candidate_ids, matrix=rows)
    else:
        temp_db = build_database(
            provider, (stage_two(image_id) for image_id in candidate_ids), attribute
        )
        if temp_db.ids != candidate_ids:
            raise DataError("image loader returned ids that do not match the candidates")

    vector = provider.embed_image_attribute(query, attribute)
    hits = top_k(temp_db, vector, min(k, len(temp_db)))
    return RetrievalResult(
        query_id=query.image_id, strategy=f"hierarchical({attribute},b={b})", hits=hits
    )
