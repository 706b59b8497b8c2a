"""Shared domain types: attribute registry, lesion images, manifests, splits."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from lesionseek.errors import DataError


# The canonical attribute ordering. Binary files, reports and the training
# export all index attributes by position in this tuple; never reorder.
ATTRIBUTE_NAMES: tuple[str, ...] = (
    "areaMM2",
    "minorAxisMM",
    "norm_color",
    "radial_color_std_max",
    "deltaB",
    "deltaL",
    "deltaLB",
    "stdLExt",
    "clin_size_long_diam_mm",
    "perimeterMM",
    "norm_border",
    "area_perim_ratio",
    "A",
    "Aext",
    "B",
    "Bext",
)

N_ATTRIBUTES = len(ATTRIBUTE_NAMES)

_INDEX_BY_NAME = {name: i for i, name in enumerate(ATTRIBUTE_NAMES)}


def attribute_index(attribute: str) -> int:
    """Map an attribute name to its canonical index (0..15)."""
    try:
        return _INDEX_BY_NAME[attribute]
    except KeyError:
        raise DataError(f"unknown attribute name: {attribute!r}") from None


def attribute_from_index(index: int) -> str:
    """Inverse of :func:`attribute_index`."""
    if not 0 <= index < N_ATTRIBUTES:
        raise DataError(f"attribute index out of range: {index}")
    return ATTRIBUTE_NAMES[index]


@dataclass(frozen=True, eq=False)
class LesionImage:
    """An RGB lesion crop with its binary mask and physical pixel scale.

    ``pixels`` is H x W x 3 uint8, ``mask`` is H x W bool (True = lesion).
    ``scale_mm_per_px`` is the side length of one pixel in millimetres.
    """

    image_id: str
    patient_id: str
    pixels: np.ndarray
    mask: np.ndarray
    scale_mm_per_px: float

    def __post_init__(self):
        px = np.asarray(self.pixels)
        mk = np.asarray(self.mask)
        if px.ndim != 3 or px.shape[2] != 3:
            raise DataError(f"{self.image_id}: pixels must be H x W x 3, got {px.shape}")
        if px.dtype != np.uint8:
            raise DataError(f"{self.image_id}: pixels must be uint8, got {px.dtype}")
        if mk.shape != px.shape[:2]:
            raise DataError(
                f"{self.image_id}: mask shape {mk.shape} != image shape {px.shape[:2]}"
            )
        if mk.dtype != np.bool_:
            raise DataError(f"{self.image_id}: mask must be boolean, got {mk.dtype}")
        if not mk.any():
            raise DataError(f"{self.image_id}: mask contains no lesion pixels")
        if mk.all():
            raise DataError(f"{self.image_id}: mask contains no background pixels")
        if not self.scale_mm_per_px > 0:
            raise DataError(f"{self.image_id}: scale_mm_per_px must be positive")


class AttributeVector:
    """The 16 quantitative attributes of one image, in canonical order."""

    __slots__ = ("values",)

    def __init__(self, values):
        v = np.asarray(values, dtype=np.float64)
        if v.shape != (N_ATTRIBUTES,):
            raise DataError(f"attribute vector must have {N_ATTRIBUTES} entries, got {v.shape}")
        self.values = v

    def __getitem__(self, attribute: str) -> float:
        return float(self.values[attribute_index(attribute)])

    def as_dict(self) -> dict[str, float]:
        return {name: float(self.values[i]) for i, name in enumerate(ATTRIBUTE_NAMES)}

    @classmethod
    def from_dict(cls, values: dict[str, float]) -> "AttributeVector":
        missing = [n for n in ATTRIBUTE_NAMES if n not in values]
        if missing:
            raise DataError(f"attribute dict missing: {missing}")
        return cls([values[n] for n in ATTRIBUTE_NAMES])

    def validate(self) -> "AttributeVector":
        """Check internal consistency; returns self so calls can chain."""
        v = self.values
        if not np.all(np.isfinite(v)):
            bad = [ATTRIBUTE_NAMES[i] for i in np.nonzero(~np.isfinite(v))[0]]
            raise DataError(f"non-finite attribute values: {bad}")
        if not self["areaMM2"] > 0:
            raise DataError("areaMM2 must be positive")
        if not self["perimeterMM"] > 0:
            raise DataError("perimeterMM must be positive")
        if self["minorAxisMM"] > self["clin_size_long_diam_mm"]:
            raise DataError("minorAxisMM exceeds clin_size_long_diam_mm")
        ratio = self["perimeterMM"] / self["areaMM2"]
        if abs(self["area_perim_ratio"] - ratio) > 1e-9 * abs(ratio):
            raise DataError("area_perim_ratio inconsistent with perimeterMM/areaMM2")
        return self

    def __repr__(self):
        return f"AttributeVector({self.as_dict()})"


@dataclass
class DatasetSplit:
    """Patient-stratified train/test partition of a corpus."""

    train_ids: set[str]
    test_ids: set[str]
    achieved_train_fraction: float = 0.0

    def to_json(self) -> str:
        return json.dumps(
            {
                "train_ids": sorted(self.train_ids),
                "test_ids": sorted(self.test_ids),
                "achieved_train_fraction": self.achieved_train_fraction,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "DatasetSplit":
        obj = json.loads(text)
        return cls(
            train_ids=set(obj["train_ids"]),
            test_ids=set(obj["test_ids"]),
            achieved_train_fraction=float(obj.get("achieved_train_fraction", 0.0)),
        )


@dataclass
class ManifestEntry:
    """One line of an image manifest (paths are relative to the manifest)."""

    image_id: str
    patient_id: str
    image_path: str
    mask_path: str
    scale_mm_per_px: float
    attributes: dict[str, float] | None = None
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    def to_json(self) -> str:
        obj = {
            "image_id": self.image_id,
            "patient_id": self.patient_id,
            "image_path": self.image_path,
            "mask_path": self.mask_path,
            "scale_mm_per_px": self.scale_mm_per_px,
        }
        if self.attributes is not None:
            obj["attributes"] = self.attributes
        return json.dumps(obj)

    def rebased(self, new_dir, attributes: dict[str, float] | None = None) -> "ManifestEntry":
        """Copy with paths recomputed relative to ``new_dir`` (and optionally
        attributes attached), for writing a manifest in another directory."""
        import os

        new_dir = Path(new_dir)
        return ManifestEntry(
            image_id=self.image_id,
            patient_id=self.patient_id,
            image_path=os.path.relpath(self.base_dir / self.image_path, new_dir),
            mask_path=os.path.relpath(self.base_dir / self.mask_path, new_dir),
            scale_mm_per_px=self.scale_mm_per_px,
            attributes=self.attributes if attributes is None else attributes,
            base_dir=new_dir,
        )

    def load_image(self) -> LesionImage:
        """Load the referenced PNG pair into a LesionImage."""
        pixels = np.asarray(Image.open(self.base_dir / self.image_path).convert("RGB"))
        mask = np.asarray(Image.open(self.base_dir / self.mask_path).convert("L")) > 127
        return LesionImage(
            image_id=self.image_id,
            patient_id=self.patient_id,
            pixels=pixels,
            mask=mask,
            scale_mm_per_px=self.scale_mm_per_px,
        )


def read_manifest(path) -> list[ManifestEntry]:
    """Read a JSON-lines image manifest; duplicate image ids are rejected."""
    path = Path(path)
    entries = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            try:
                entry = ManifestEntry(
                    image_id=obj["image_id"],
                    patient_id=obj["patient_id"],
                    image_path=obj["image_path"],
                    mask_path=obj["mask_path"],
                    scale_mm_per_px=float(obj["scale_mm_per_px"]),
                    attributes=obj.get("attributes"),
                    base_dir=path.parent,
                )
            except KeyError as exc:
                raise DataError(f"{path}:{lineno}: missing manifest key {exc}") from None
            if entry.image_id in seen:
                raise DataError(f"{path}:{lineno}: duplicate image_id {entry.image_id!r}")
            seen.add(entry.image_id)
            entries.append(entry)
    if not entries:
        raise DataError(f"{path}: empty manifest")
    return entries


def write_manifest(entries, path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for entry in entries:
            fh.write(entry.to_json() + "\n")
