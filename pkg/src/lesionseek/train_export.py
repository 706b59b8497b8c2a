"""Export (image, question, value) tuples for external fine-tuning.

Each image contributes W tuples for W distinct attributes sampled without
replacement; answers are fixed-point decimal strings.
"""

from __future__ import annotations

import decimal
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from lesionseek.core import (
    ATTRIBUTE_NAMES,
    AttributeVector,
    LesionImage,
    ManifestEntry,
    N_ATTRIBUTES,
    attribute_index,
)
from lesionseek.errors import DataError
from lesionseek.oracle import compute_attributes
from lesionseek.rng import rng_for

SCHEMA_VERSION = 1

# One fixed English question per attribute. The area phrasing is the
# canonical example; the other fifteen follow the same pattern.
QUESTION_TEMPLATES: dict[str, str] = {
    "areaMM2": "What is the area of the lesion in mm^2?",
    "minorAxisMM": "What is the smallest diameter of the lesion in mm?",
    "norm_color": "What is the color variation of the lesion?",
    "radial_color_std_max": "What is the color asymmetry within the lesion?",
    "deltaB": "What is the average B (LAB) contrast between the inside and outside of the lesion?",
    "deltaL": "What is the average L (LAB) contrast between the inside and outside of the lesion?",
    "deltaLB": "What is the L (LAB) contrast between the lesion and its immediate surrounding skin?",
    "stdLExt": "What is the standard deviation of L (LAB) outside the lesion?",
    "clin_size_long_diam_mm": "What is the maximum diameter of the lesion in mm?",
    "perimeterMM": "What is the perimeter of the lesion in mm?",
    "norm_border": "What is the border irregularity of the lesion?",
    "area_perim_ratio": "What is the ratio between the perimeter and area of the lesion?",
    "A": "What is the A (LAB) value inside the lesion?",
    "Aext": "What is the A (LAB) value outside the lesion?",
    "B": "What is the B (LAB) value inside the lesion?",
    "Bext": "What is the B (LAB) value outside the lesion?",
}


@dataclass(frozen=True)
class TrainingTuple:
    image_id: str
    image_path: str
    question: str
    answer: str
    attribute: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "image_id": self.image_id,
                "image": self.image_path,
                "question": self.question,
                "answer": self.answer,
                "attribute": self.attribute,
            }
        )


def question_for(attribute: str) -> str:
    attribute_index(attribute)  # validates the name
    return QUESTION_TEMPLATES[attribute]


def format_value(attribute: str, value: float, decimals: int = 2) -> str:
    """Fixed-point decimal string of the exact binary value, half-even.

    Ties are resolved on the true binary value of the float, so 2.675
    (which is slightly below 2.675 in binary) formats as "2.67".
    """
    attribute_index(attribute)
    if not math.isfinite(value):
        raise DataError(f"cannot format non-finite value {value!r} for {attribute}")
    if decimals < 0:
        raise DataError("decimals must be non-negative")
    quantum = decimal.Decimal(1).scaleb(-decimals)
    quantized = decimal.Decimal(value).quantize(quantum, rounding=decimal.ROUND_HALF_EVEN)
    if quantized.is_zero():
        quantized = abs(quantized)  # never emit "-0.00"
    return format(quantized, "f")


def sample_attributes(image_index: int, w: int, seed: int) -> list[str]:
    """W distinct attribute names, uniform without replacement.

    The RNG stream is derived from (seed, image_index), so the draw for one
    image never depends on processing order.
    """
    if not 1 <= w <= N_ATTRIBUTES:
        raise DataError(f"W must lie in [1, {N_ATTRIBUTES}], got {w}")
    rng = rng_for(seed, "attribute-sample", image_index)
    chosen = rng.choice(N_ATTRIBUTES, size=w, replace=False)
    return [ATTRIBUTE_NAMES[i] for i in chosen]


def export_training_set(
    entries: list[ManifestEntry],
    w: int,
    seed: int,
    path,
    decimals: int = 2,
    oracle: Callable[[LesionImage], AttributeVector] = compute_attributes,
) -> int:
    """Write |entries| x W training tuples as JSON lines; returns the count.

    Attribute values come from the manifest when present, otherwise from
    the oracle on the loaded image.
    """
    if not entries:
        raise DataError("empty manifest")
    if not 1 <= w <= N_ATTRIBUTES:
        raise DataError(f"W must lie in [1, {N_ATTRIBUTES}], got {w}")

    path = Path(path)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for index, entry in enumerate(entries):
            if entry.attributes is not None:
                values = AttributeVector.from_dict(entry.attributes)
            else:
                try:
                    values = oracle(entry.load_image())
                except Exception as exc:
                    raise DataError(
                        f"attribute computation failed for image {entry.image_id!r}: {exc}"
                    ) from exc
            for attribute in sample_attributes(index, w, seed):
                record = TrainingTuple(
                    image_id=entry.image_id,
                    image_path=entry.image_path,
                    question=question_for(attribute),
                    answer=format_value(attribute, values[attribute], decimals),
                    attribute=attribute,
                )
                fh.write(record.to_json() + "\n")
                count += 1

    meta = {
        "schema_version": SCHEMA_VERSION,
        "w": w,
        "seed": seed,
        "decimals": decimals,
        "tuple_count": count,
    }
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return count
