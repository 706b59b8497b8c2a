"""Synthetic lesion corpus: star-convex blobs with controllable attributes.

Each lesion is a radial Fourier perturbation of a disk, so area, border
irregularity and interior/exterior colour are directly steerable, which is
what the oracle tests lean on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from lesionseek.core import DatasetSplit, LesionImage, ManifestEntry, write_manifest
from lesionseek.errors import DataError
from lesionseek.rng import rng_for

_HARMONIC_LOW = 3
_HARMONIC_HIGH = 12


@dataclass(frozen=True)
class LesionParams:
    """Generation parameters for one synthetic lesion."""

    radius_px: float
    jaggedness: float
    interior_rgb: tuple[int, int, int]
    exterior_rgb: tuple[int, int, int]
    interior_noise_sd: float
    scale_mm_per_px: float
    image_side_px: int = 128

    def validate(self) -> "LesionParams":
        if self.radius_px <= 0:
            raise DataError("radius_px must be positive")
        if not 0.0 <= self.jaggedness <= 1.0:
            raise DataError("jaggedness must lie in [0, 1]")
        if self.interior_noise_sd < 0:
            raise DataError("interior_noise_sd must be non-negative")
        if self.scale_mm_per_px <= 0:
            raise DataError("scale_mm_per_px must be positive")
        if self.image_side_px < 16:
            raise DataError("image_side_px must be at least 16")
        if self.radius_px * (1.0 + self.jaggedness) >= self.image_side_px / 2.0 - 2.0:
            raise DataError(
                "lesion does not fit: radius_px * (1 + jaggedness) must stay below "
                "image_side_px / 2 - 2"
            )
        return self


@dataclass
class ParamRanges:
    """Uniform sampling ranges used by :func:`generate_corpus`.

    ``brightness_shift`` is a per-image offset applied to both the interior
    and the exterior colour, imitating lighting variation between
    photographs; contrast attributes are invariant to it.
    """

    radius_px: tuple[float, float] = (16.0, 38.0)
    jaggedness: tuple[float, float] = (0.0, 0.55)
    interior_gray: tuple[int, int] = (55, 150)
    exterior_gray: tuple[int, int] = (130, 200)
    brightness_shift: tuple[int, int] = (-60, 60)
    channel_jitter: int = 35
    interior_noise_sd: tuple[float, float] = (1.0, 9.0)
    scale_mm_per_px: tuple[float, float] = (0.09, 0.15)
    image_side_px: int = 128

    def sample(self, rng: np.random.Generator) -> LesionParams:
        shift = rng.integers(self.brightness_shift[0], self.brightness_shift[1] + 1)

        def tri(base_range, jitter):
            gray = rng.integers(base_range[0], base_range[1] + 1) + shift
            channels = gray + rng.integers(-jitter, jitter + 1, size=3)
            return tuple(int(c) for c in np.clip(channels, 0, 255))

        # Area-uniform radius sampling keeps lesion area (and the attributes
        # that scale with it) free of the heavy right tail plain uniform
        # radii would produce.
        radius = float(
            np.sqrt(rng.uniform(self.radius_px[0] ** 2, self.radius_px[1] ** 2))
        )
        max_jag = min(
            self.jaggedness[1],
            (self.image_side_px / 2.0 - 2.5) / radius - 1.0,
        )
        jag = rng.uniform(self.jaggedness[0], max(self.jaggedness[0], max_jag))
        return LesionParams(
            radius_px=radius,
            jaggedness=jag,
            interior_rgb=tri(self.interior_gray, self.channel_jitter),
            exterior_rgb=tri(self.exterior_gray, self.channel_jitter),
            interior_noise_sd=rng.uniform(*self.interior_noise_sd),
            scale_mm_per_px=rng.uniform(*self.scale_mm_per_px),
            image_side_px=self.image_side_px,
        ).validate()


def _radial_profile(params: LesionParams, rng: np.random.Generator, theta: np.ndarray):
    """Perturbed radius r(theta); the perturbation is bounded by +-jaggedness."""
    harmonics = np.arange(_HARMONIC_LOW, _HARMONIC_HIGH + 1)
    cos_amp = rng.normal(size=len(harmonics))
    sin_amp = rng.normal(size=len(harmonics))
    bound = np.hypot(cos_amp, sin_amp).sum()
    shape = np.zeros_like(theta)
    for h, ca, sa in zip(harmonics, cos_amp, sin_amp):
        shape += ca * np.cos(h * theta) + sa * np.sin(h * theta)
    if bound > 0:
        shape /= bound
    return params.radius_px * (1.0 + params.jaggedness * shape)


def generate_lesion(params: LesionParams, seed: int, image_id: str = "", patient_id: str = "") -> LesionImage:
    """Deterministically rasterize one lesion for (params, seed)."""
    params.validate()
    rng = rng_for(seed)
    return _render(params, rng, image_id or f"seed{seed}", patient_id)


def generate_corpus(
    n_images: int,
    n_patients: int,
    out_dir,
    seed: int = 0,
    param_ranges: ParamRanges | None = None,
    threads: int = 1,
) -> list[ManifestEntry]:
    """Write a corpus of images, masks and a manifest; returns the entries.

    Image i is assigned to patient i mod n_patients and generated from an
    RNG stream derived from (seed, i), so output never depends on worker
    count or processing order.
    """
    if n_images < 1:
        raise DataError("n_images must be at least 1")
    if not 1 <= n_patients <= n_images:
        raise DataError("need 1 <= n_patients <= n_images")
    ranges = param_ranges or ParamRanges()

    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)

    def make_one(index: int) -> ManifestEntry:
        rng = rng_for(seed, index)
        params = ranges.sample(rng)
        image = _render(params, rng, f"img{index:06d}", f"pat{index % n_patients:04d}")
        image_rel = f"images/{image.image_id}.png"
        mask_rel = f"masks/{image.image_id}.png"
        Image.fromarray(image.pixels).save(out_dir / image_rel)
        Image.fromarray(image.mask.astype(np.uint8) * 255, mode="L").save(out_dir / mask_rel)
        return ManifestEntry(
            image_id=image.image_id,
            patient_id=image.patient_id,
            image_path=image_rel,
            mask_path=mask_rel,
            scale_mm_per_px=image.scale_mm_per_px,
            base_dir=out_dir,
        )

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(make_one, range(n_images)))
    else:
        entries = [make_one(index) for index in range(n_images)]
    write_manifest(entries, out_dir / "manifest.jsonl")
    return entries


_MAX_CENTER_JITTER = 18.0


def _render(params: LesionParams, rng: np.random.Generator, image_id: str, patient_id: str):
    """Rasterize with an already-advanced RNG (shared by generate_corpus)."""
    side = params.image_side_px
    # The fit precondition leaves slack between the lesion's maximal radius
    # and the border; the centre wanders inside it, imitating the variable
    # lesion placement of real crops. The lesion still never touches the edge.
    slack = side / 2.0 - 2.0 - params.radius_px * (1.0 + params.jaggedness)
    jitter = min(max(slack - 0.5, 0.0), _MAX_CENTER_JITTER)
    center_r = (side - 1) / 2.0 + rng.uniform(-jitter, jitter)
    center_c = (side - 1) / 2.0 + rng.uniform(-jitter, jitter)
    rows, cols = np.mgrid[0:side, 0:side]
    theta = np.arctan2(rows - center_r, cols - center_c)
    radial = np.hypot(rows - center_r, cols - center_c)
    mask = radial <= _radial_profile(params, rng, theta)
    pixels = np.where(
        mask[..., None],
        np.array(params.interior_rgb, dtype=np.float64),
        np.array(params.exterior_rgb, dtype=np.float64),
    )
    if params.interior_noise_sd > 0:
        pixels = pixels + rng.normal(scale=params.interior_noise_sd, size=pixels.shape)
    pixels = np.clip(np.rint(pixels), 0, 255).astype(np.uint8)
    return LesionImage(
        image_id=image_id,
        patient_id=patient_id,
        pixels=pixels,
        mask=mask,
        scale_mm_per_px=params.scale_mm_per_px,
    )


def make_split(
    entries: list[ManifestEntry], train_fraction: float, seed: int = 0
) -> DatasetSplit:
    """Patient-stratified split: shuffle patients, fill train greedily.

    Patients are assigned to train until its image count reaches
    train_fraction of the corpus; the rest go to test. At least one patient
    is kept on each side.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DataError("train_fraction must lie strictly between 0 and 1")
    by_patient: dict[str, list[str]] = {}
    for entry in entries:
        by_patient.setdefault(entry.patient_id, []).append(entry.image_id)
    if len(by_patient) < 2:
        raise DataError("cannot stratify: need at least 2 patients")

    patients = sorted(by_patient)
    rng = rng_for(seed)
    order = [patients[i] for i in rng.permutation(len(patients))]

    total = sum(len(ids) for ids in by_patient.values())
    target = train_fraction * total
    train_ids: set[str] = set()
    taken = 0
    for taken, patient in enumerate(order, start=1):
        train_ids.update(by_patient[patient])
        if len(train_ids) >= target:
            break
    if taken == len(order):  # keep the test side populated
        dropped = order[-1]
        train_ids.difference_update(by_patient[dropped])
        taken -= 1
    test_ids = {eid for p in order[taken:] for eid in by_patient[p]}
    return DatasetSplit(
        train_ids=train_ids,
        test_ids=test_ids,
        achieved_train_fraction=len(train_ids) / total,
    )


def write_split(split: DatasetSplit, path) -> None:
    Path(path).write_text(split.to_json() + "\n", encoding="utf-8")


def read_split(path) -> DatasetSplit:
    try:
        return DatasetSplit.from_json(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"{path}: invalid split file: {exc}") from None
