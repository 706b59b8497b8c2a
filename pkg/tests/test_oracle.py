import math

import numpy as np
import pytest

from lesionseek.color import rgb_image_to_lab
from lesionseek.core import ATTRIBUTE_NAMES, LesionImage
from lesionseek.errors import DataError, EmptyMaskError, LesionNotContainedError
from lesionseek.oracle import compute_attributes, mask_geometry
from lesionseek.synth import LesionParams, generate_lesion

from conftest import disk_mask, flat_image, random_lesion

GEOMETRY_ATTRIBUTES = (
    "areaMM2", "perimeterMM", "minorAxisMM", "clin_size_long_diam_mm",
    "norm_border", "area_perim_ratio",
)


# --- mask_geometry against brute-force oracles ---


def test_single_pixel_mask():
    mask = np.zeros((3, 3), dtype=bool)
    mask[1, 1] = True
    geometry = mask_geometry(mask)
    assert geometry.area_px == 1
    assert geometry.centroid == (1.0, 1.0)
    # isoperimetric floor keeps the perimeter meaningful for a point mask
    assert geometry.perimeter_px == pytest.approx(math.sqrt(4 * math.pi))


def test_empty_mask_rejected():
    with pytest.raises(EmptyMaskError, match="empty lesion mask"):
        mask_geometry(np.zeros((4, 4), dtype=bool))


def test_disk_geometry_vs_brute_force():
    mask = disk_mask(40)
    geometry = mask_geometry(mask)

    # area oracle: direct pixel count over the same rasterization
    assert geometry.area_px == int(mask.sum())
    assert abs(geometry.area_px - math.pi * 40**2) / (math.pi * 40**2) < 0.01

    # feret oracle: brute-force pairwise distance over boundary pixel corners
    interior = np.zeros_like(mask)
    interior[1:-1, 1:-1] = (
        mask[1:-1, 1:-1] & mask[:-2, 1:-1] & mask[2:, 1:-1] & mask[1:-1, :-2] & mask[1:-1, 2:]
    )
    boundary = np.argwhere(mask & ~interior).astype(float)
    corners = np.concatenate(
        [boundary + np.array(offset) for offset in
         ((-0.5, -0.5), (-0.5, 0.5), (0.5, -0.5), (0.5, 0.5))]
    )
    best = 0.0
    for point in corners:
        best = max(best, float(np.max(np.hypot(*(corners - point).T))))
    assert geometry.max_feret_px == pytest.approx(best, abs=1e-9)
    assert abs(geometry.max_feret_px - 80.0) / 80.0 < 0.02

    # perimeter within 3% of the true circle perimeter
    assert abs(geometry.perimeter_px - 2 * math.pi * 40) / (2 * math.pi * 40) < 0.03


def test_rectangle_moment_axes_vs_closed_form():
    mask = np.zeros((80, 120), dtype=bool)
    mask[30:50, 30:90] = True  # 20 x 60
    geometry = mask_geometry(mask)

    # brute-force moment oracle
    rows, cols = np.nonzero(mask)
    dr, dc = rows - rows.mean(), cols - cols.mean()
    covariance = np.array([
        [np.mean(dr * dr), np.mean(dr * dc)],
        [np.mean(dr * dc), np.mean(dc * dc)],
    ])
    eigenvalues = np.linalg.eigvalsh(covariance)
    assert geometry.ellipse_minor_px == pytest.approx(4 * math.sqrt(eigenvalues[0]), rel=1e-9)
    assert geometry.ellipse_major_px == pytest.approx(4 * math.sqrt(eigenvalues[1]), rel=1e-9)

    # closed-form: a 3:1 rectangle has a 3:1 moment ellipse
    ratio = geometry.ellipse_major_px / geometry.ellipse_minor_px
    assert abs(ratio - 3.0) / 3.0 < 0.03


def test_geometry_invariants_on_synthetic_lesions():
    for seed in range(25):
        geometry = mask_geometry(random_lesion(seed).mask)
        assert geometry.area_px >= 1
        assert geometry.ellipse_minor_px <= geometry.ellipse_major_px
        assert geometry.ellipse_major_px <= geometry.max_feret_px * 1.01
        assert geometry.perimeter_px**2 >= 4 * math.pi * geometry.area_px * (1 - 1e-6)


# --- compute_attributes ---


def test_uniform_disk_acceptance_values(gray_disk_40):
    values = compute_attributes(gray_disk_40)
    assert abs(values["areaMM2"] - 50.27) / 50.27 < 0.01
    assert abs(values["perimeterMM"] - 25.13) / 25.13 < 0.03
    assert abs(values["clin_size_long_diam_mm"] - 8.0) / 8.0 < 0.02
    assert values["norm_color"] == pytest.approx(0.0, abs=1e-9)
    assert values["radial_color_std_max"] == pytest.approx(0.0, abs=1e-9)
    assert values["norm_border"] < 0.02


def test_interior_exterior_contrast_vs_per_pixel_oracle():
    mask = disk_mask(25, side=64)
    image = flat_image(mask, interior=(120, 80, 70), exterior=(200, 170, 150))
    values = compute_attributes(image)

    # brute-force per-pixel LAB averages
    lab = rgb_image_to_lab(image.pixels)
    inside = lab[mask]
    outside = lab[~mask]
    assert values["deltaL"] == pytest.approx(inside[:, 0].mean() - outside[:, 0].mean(), abs=1e-9)
    assert values["deltaB"] == pytest.approx(inside[:, 2].mean() - outside[:, 2].mean(), abs=1e-9)
    assert values["A"] == pytest.approx(inside[:, 1].mean(), abs=1e-9)
    assert values["Aext"] == pytest.approx(outside[:, 1].mean(), abs=1e-9)
    assert values["B"] == pytest.approx(inside[:, 2].mean(), abs=1e-9)
    assert values["Bext"] == pytest.approx(outside[:, 2].mean(), abs=1e-9)
    assert values["stdLExt"] == pytest.approx(outside[:, 0].std(), abs=1e-9)
    assert values["deltaL"] < 0  # darker interior


def test_delta_lb_uses_the_ring():
    # gradient exterior: ring differs from far field
    mask = disk_mask(20, side=96)
    pixels = np.empty((96, 96, 3), dtype=np.uint8)
    cols = np.linspace(60, 230, 96).astype(np.uint8)
    pixels[:] = cols[None, :, None]
    pixels[mask] = (30, 30, 30)
    image = LesionImage("grad", "p", pixels, mask, 0.1)
    values = compute_attributes(image)
    assert values["deltaLB"] != pytest.approx(values["deltaL"], abs=1e-6)

    # ring oracle: exterior pixels within max(0.2 * r_eq, 2) of the lesion
    from scipy import ndimage

    lab = rgb_image_to_lab(pixels)
    r_eq = math.sqrt(mask.sum() / math.pi)
    width = max(0.2 * r_eq, 2.0)
    ring = ~mask & (ndimage.distance_transform_edt(~mask) <= width)
    expected = lab[mask][:, 0].mean() - lab[ring][:, 0].mean()
    assert values["deltaLB"] == pytest.approx(expected, abs=1e-9)


def test_star_has_rougher_border_than_disk():
    base = dict(interior_rgb=(90, 90, 90), exterior_rgb=(200, 200, 200),
                interior_noise_sd=0.0, scale_mm_per_px=0.1, image_side_px=128)
    disk = generate_lesion(LesionParams(radius_px=30, jaggedness=0.0, **base), 5, image_id="d")
    star = generate_lesion(LesionParams(radius_px=30, jaggedness=0.5, **base), 5, image_id="s")
    assert (compute_attributes(star)["norm_border"]
            > compute_attributes(disk)["norm_border"])


def test_radial_asymmetry_detected():
    # half the disk dark, half light: strong across-sector variation
    mask = disk_mask(20, side=64)
    pixels = np.full((64, 64, 3), 200, dtype=np.uint8)
    rows = np.arange(64)
    top = rows[:, None] < 31.5
    pixels[mask & top] = (40, 40, 40)
    pixels[mask & ~top] = (160, 160, 160)
    split_image = LesionImage("half", "p", pixels, mask, 0.1)

    uniform = flat_image(mask, interior=(100, 100, 100), exterior=(200, 200, 200),
                         image_id="uni")
    assert compute_attributes(split_image)["radial_color_std_max"] > 5.0
    assert compute_attributes(uniform)["radial_color_std_max"] == pytest.approx(0.0, abs=1e-9)


def test_border_touching_lesion_rejected():
    mask = np.zeros((32, 32), dtype=bool)
    mask[0:8, 4:10] = True  # touches row 0
    image = flat_image(mask)
    with pytest.raises(LesionNotContainedError, match="not fully contained"):
        compute_attributes(image)


# --- module invariants, on 200 random synthetic lesions in the acceptance
# suite; spot-checked here on a smaller sample for fast feedback ---


def scale_doubling_checks(image: LesionImage):
    doubled = LesionImage(image.image_id, image.patient_id, image.pixels,
                          image.mask, image.scale_mm_per_px * 2)
    base = compute_attributes(image)
    scaled = compute_attributes(doubled)
    assert scaled["areaMM2"] == pytest.approx(4 * base["areaMM2"], rel=1e-9)
    for name in ("perimeterMM", "minorAxisMM", "clin_size_long_diam_mm"):
        assert scaled[name] == pytest.approx(2 * base[name], rel=1e-9)
    assert scaled["area_perim_ratio"] == pytest.approx(base["area_perim_ratio"] / 2, rel=1e-9)
    for name in ATTRIBUTE_NAMES:
        if name not in ("areaMM2", "perimeterMM", "minorAxisMM",
                        "clin_size_long_diam_mm", "area_perim_ratio"):
            assert scaled[name] == base[name]


def rotation_checks(image: LesionImage):
    rotated = LesionImage(image.image_id, image.patient_id,
                          np.ascontiguousarray(np.rot90(image.pixels)),
                          np.ascontiguousarray(np.rot90(image.mask)),
                          image.scale_mm_per_px)
    base = compute_attributes(image).values
    turned = compute_attributes(rotated).values
    scale = np.maximum(np.abs(base), 1e-6)
    assert (np.abs(turned - base) / scale < 0.02).all()


def color_geometry_separation_checks(image: LesionImage, seed: int):
    rng = np.random.default_rng(seed)
    shuffled = rng.integers(0, 256, size=image.pixels.shape, dtype=np.uint8)
    recolored = LesionImage(image.image_id, image.patient_id, shuffled,
                            image.mask, image.scale_mm_per_px)
    base = compute_attributes(image)
    recolor = compute_attributes(recolored)
    for name in GEOMETRY_ATTRIBUTES:
        assert recolor[name] == base[name]  # bitwise: geometry reads only the mask


@pytest.mark.parametrize("seed", range(10))
def test_oracle_invariants_sample(seed):
    image = random_lesion(seed + 100)
    scale_doubling_checks(image)
    rotation_checks(image)
    color_geometry_separation_checks(image, seed)


def test_attribute_vector_is_validated():
    values = compute_attributes(random_lesion(7)).validate()
    ratio = values["perimeterMM"] / values["areaMM2"]
    assert values["area_perim_ratio"] == pytest.approx(ratio, rel=1e-12)
