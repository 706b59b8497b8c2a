import math

import numpy as np
import pytest

from lesionseek.core import LesionImage
from lesionseek.synth import LesionParams, generate_lesion


def disk_mask(radius: float, side: int | None = None, center=None) -> np.ndarray:
    """Rasterized disk: pixel centres within ``radius`` of ``center``."""
    side = side or 2 * int(math.ceil(radius)) + 7
    if center is None:
        center = ((side - 1) / 2.0, (side - 1) / 2.0)
    rows, cols = np.mgrid[0:side, 0:side]
    return (rows - center[0]) ** 2 + (cols - center[1]) ** 2 <= radius * radius


def flat_image(mask: np.ndarray, interior=(120, 80, 70), exterior=(200, 170, 150),
               image_id="img", patient_id="pat", scale=0.1) -> LesionImage:
    pixels = np.where(mask[..., None], np.uint8(interior), np.uint8(exterior)).astype(np.uint8)
    return LesionImage(image_id=image_id, patient_id=patient_id, pixels=pixels,
                       mask=mask, scale_mm_per_px=scale)


@pytest.fixture
def gray_disk_40():
    """Uniform disk, radius 40 px, 0.1 mm/px: the acceptance-suite shape."""
    params = LesionParams(
        radius_px=40.0, jaggedness=0.0, interior_rgb=(90, 90, 90),
        exterior_rgb=(200, 200, 200), interior_noise_sd=0.0,
        scale_mm_per_px=0.1, image_side_px=128,
    )
    return generate_lesion(params, seed=40, image_id="disk40")


def random_lesion(seed: int, **overrides) -> LesionImage:
    """A randomized synthetic lesion for property tests."""
    rng = np.random.default_rng(seed)
    params = LesionParams(
        radius_px=float(rng.uniform(16, 38)),
        jaggedness=float(rng.uniform(0.0, 0.55)),
        interior_rgb=tuple(int(v) for v in rng.integers(30, 160, 3)),
        exterior_rgb=tuple(int(v) for v in rng.integers(120, 235, 3)),
        interior_noise_sd=float(rng.uniform(0.0, 9.0)),
        scale_mm_per_px=float(rng.uniform(0.05, 0.2)),
        image_side_px=128,
        **overrides,
    )
    return generate_lesion(params, seed=seed, image_id=f"rand{seed}")
