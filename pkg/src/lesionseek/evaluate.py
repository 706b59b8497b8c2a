"""Retrieval-quality evaluation: percentile ranks of retrieved attribute
differences against the full training reference set, plus attribute
prediction R-squared."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from lesionseek.core import (
    ATTRIBUTE_NAMES,
    AttributeVector,
    LesionImage,
    ManifestEntry,
    attribute_index,
)
from lesionseek.embedding import EmbeddingProvider
from lesionseek.errors import DataError
from lesionseek.oracle import compute_attributes
from lesionseek.retrieval import (
    search_attribute,
    search_hierarchical,
    search_image_only,
)
from lesionseek.store import EmbeddingDatabase

log = logging.getLogger(__name__)

STRATEGIES = ("attr", "hier", "image", "untuned")


def percentile_rank(diff: float, reference_diffs) -> float:
    """Midrank percentile of ``diff`` within the reference multiset:
    100 * (count_less + 0.5 * count_equal) / N."""
    reference = np.asarray(reference_diffs, dtype=np.float64)
    if reference.size == 0:
        raise DataError("empty reference set")
    less = int(np.count_nonzero(reference < diff))
    equal = int(np.count_nonzero(reference == diff))
    return 100.0 * (less + 0.5 * equal) / reference.size


def _percentile_ranks_sorted(diffs: np.ndarray, sorted_reference: np.ndarray) -> np.ndarray:
    """Vectorized midrank percentiles against an already-sorted reference."""
    left = np.searchsorted(sorted_reference, diffs, side="left")
    right = np.searchsorted(sorted_reference, diffs, side="right")
    return 100.0 * (left + 0.5 * (right - left)) / sorted_reference.size


def attribute_diffs(
    query_attrs: AttributeVector, others: Sequence[AttributeVector], attribute: str
) -> np.ndarray:
    """Squared attribute differences between the query and each other image."""
    index = attribute_index(attribute)
    query_value = query_attrs.values[index]
    other_values = np.array([o.values[index] for o in others], dtype=np.float64)
    return (other_values - query_value) ** 2


def r_squared(predictions, truths) -> float:
    """Coefficient of determination 1 - SS_res / SS_tot."""
    predictions = np.asarray(predictions, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if predictions.shape != truths.shape or predictions.ndim != 1:
        raise DataError("predictions and truths must be equal-length vectors")
    if predictions.size < 2:
        raise DataError("need at least 2 points")
    ss_tot = float(((truths - truths.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise DataError("zero variance in truths")
    ss_res = float(((truths - predictions) ** 2).sum())
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class PercentileRecord:
    query_id: str
    attribute: str
    strategy: str
    retrieved_id: str
    rank_in_topk: int
    percentile: float


@dataclass
class EvalReport:
    records: list[PercentileRecord] = field(default_factory=list)
    r2: dict[str, float] = field(default_factory=dict)

    def stats(self) -> dict[tuple[str, str], dict[str, float]]:
        """Exact per-(attribute, strategy) aggregates over all records."""
        grouped: dict[tuple[str, str], list[float]] = {}
        for record in self.records:
            grouped.setdefault((record.attribute, record.strategy), []).append(
                record.percentile
            )
        out = {}
        for key, values in grouped.items():
            arr = np.asarray(values, dtype=np.float64)
            out[key] = {
                "count": int(arr.size),
                "median": float(np.median(arr)),
                "q1": float(np.percentile(arr, 25)),
                "q3": float(np.percentile(arr, 75)),
                "mean": float(arr.mean()),
            }
        return out

    def median(self, attribute: str, strategy: str) -> float:
        values = [
            r.percentile
            for r in self.records
            if r.attribute == attribute and r.strategy == strategy
        ]
        if not values:
            raise DataError(f"no records for ({attribute}, {strategy})")
        return float(np.median(values))

    def write(self, out_dir) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        summary = {
            "attributes": {},
            "r2": self.r2,
        }
        for (attribute, strategy), stats in sorted(self.stats().items()):
            summary["attributes"].setdefault(attribute, {})[strategy] = stats
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        with open(out_dir / "percentiles.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["query_id", "attribute", "strategy", "retrieved_id", "rank_in_topk", "percentile"]
            )
            for r in self.records:
                writer.writerow(
                    [r.query_id, r.attribute, r.strategy, r.retrieved_id, r.rank_in_topk,
                     f"{r.percentile:.6f}"]
                )


def _attribute_matrix(
    entries: list[ManifestEntry],
    attribute_source: Callable[[LesionImage], AttributeVector],
) -> np.ndarray:
    """Per-entry attribute values, manifest order; uses embedded attributes
    when available, the oracle otherwise."""
    rows = []
    for entry in entries:
        if entry.attributes is not None:
            rows.append(AttributeVector.from_dict(entry.attributes).values)
        else:
            rows.append(attribute_source(entry.load_image()).values)
    return np.stack(rows)


def run_retrieval_benchmark(
    test_entries: list[ManifestEntry],
    train_entries: list[ManifestEntry],
    databases: dict[str, EmbeddingDatabase],
    provider: EmbeddingProvider,
    strategies: Iterable[str] = STRATEGIES,
    k: int = 5,
    b: int = 200,
    untuned_provider: EmbeddingProvider | None = None,
    attribute_source: Callable[[LesionImage], AttributeVector] = compute_attributes,
    attributes: Sequence[str] = ATTRIBUTE_NAMES,
    exclude_query: bool = True,
) -> EvalReport:
    """Top-k retrieval for every (test query, attribute, strategy), scored by
    the percentile of each retrieved image's squared attribute difference
    within the differences to the whole training set.

    ``databases`` maps "image" and "untuned" to image-only databases and
    each attribute name to its specialized database. Hierarchical stage 2
    slices rows out of the prebuilt attribute databases, which is exactly
    equivalent to on-the-fly embedding because providers are deterministic.
    """
    strategies = list(strategies)
    for strategy in strategies:
        if strategy not in STRATEGIES:
            raise DataError(f"unknown strategy {strategy!r}")
    if "untuned" in strategies and untuned_provider is None:
        raise DataError("the untuned strategy requires an untuned provider")

    def database(key: str) -> EmbeddingDatabase:
        if key not in databases:
            raise DataError(f"missing database {key!r} for requested strategies")
        return databases[key]

    train_attrs = _attribute_matrix(train_entries, attribute_source)
    train_index = {entry.image_id: i for i, entry in enumerate(train_entries)}

    needs_attr_dbs = any(s in ("attr", "hier") for s in strategies)
    report = EvalReport()

    for query_number, entry in enumerate(test_entries):
        image = entry.load_image()
        query_attrs = (
            AttributeVector.from_dict(entry.attributes)
            if entry.attributes is not None
            else attribute_source(image)
        )

        hit_lists: dict[tuple[str, str], list[tuple[str, float]]] = {}
        if "image" in strategies:
            hits = search_image_only(
                image, provider, database("image"), k, exclude_query
            ).hits
            for attribute in attributes:
                hit_lists[(attribute, "image")] = hits
        if "untuned" in strategies:
            hits = search_image_only(
                image, untuned_provider, database("untuned"), k, exclude_query
            ).hits
            for attribute in attributes:
                hit_lists[(attribute, "untuned")] = hits
        if needs_attr_dbs:
            for attribute in attributes:
                db_attr = database(attribute)
                if "attr" in strategies:
                    hit_lists[(attribute, "attr")] = search_attribute(
                        image, attribute, provider, db_attr, k, exclude_query
                    ).hits
                if "hier" in strategies:
                    hit_lists[(attribute, "hier")] = search_hierarchical(
                        image, attribute, provider, database("image"), db_attr,
                        k, b, exclude_query,
                    ).hits

        for attribute in attributes:
            index = attribute_index(attribute)
            reference = np.sort((train_attrs[:, index] - query_attrs.values[index]) ** 2)
            for strategy in strategies:
                hits = hit_lists[(attribute, strategy)]
                diffs = np.array(
                    [
                        (train_attrs[train_index[hit_id], index] - query_attrs.values[index]) ** 2
                        for hit_id, _ in hits
                    ]
                )
                percentiles = _percentile_ranks_sorted(diffs, reference)
                for rank, ((hit_id, _), percentile) in enumerate(
                    zip(hits, percentiles), start=1
                ):
                    report.records.append(
                        PercentileRecord(
                            query_id=entry.image_id,
                            attribute=attribute,
                            strategy=strategy,
                            retrieved_id=hit_id,
                            rank_in_topk=rank,
                            percentile=float(percentile),
                        )
                    )
        if (query_number + 1) % 100 == 0:
            log.info("evaluated %d / %d queries", query_number + 1, len(test_entries))
    return report


def r2_by_attribute(
    predictions: dict[str, list[tuple[str, float]]],
    truths: dict[str, dict[str, float]],
) -> dict[str, float]:
    """R-squared per attribute from (image_id, prediction) lists and a
    truths mapping image_id -> {attribute: value}."""
    out = {}
    for attribute, pairs in predictions.items():
        attribute_index(attribute)
        preds, actual = [], []
        for image_id, value in pairs:
            if image_id not in truths:
                raise DataError(f"prediction for unknown image {image_id!r}")
            preds.append(value)
            actual.append(truths[image_id][attribute])
        out[attribute] = r_squared(preds, actual)
    return out
