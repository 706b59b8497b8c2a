"""Quantitative lesion attributes computed from an image and its mask.

Geometry comes from the mask alone; colour statistics come from the pixels
alone, split into lesion interior, full exterior, and a surrounding ring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from lesionseek.color import rgb_image_to_lab
from lesionseek.core import ATTRIBUTE_NAMES, AttributeVector, LesionImage
from lesionseek.errors import EmptyMaskError, LesionNotContainedError

# Chain-code step weights for the boundary-length estimator. The weighted
# polygon through boundary-pixel centres is inflated by a half-pixel outer
# parallel (+pi for a closed curve of turning number one).
_STEP_ORTHOGONAL = 0.948
_STEP_DIAGONAL = 1.340

# Clockwise 8-neighbourhood offsets, starting north (row -1).
_NEIGHBOURS = (
    (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1),
)

_SECTOR_COUNT = 8

_RING_WIDTH_FRACTION = 0.2
_RING_WIDTH_MIN_PX = 2.0


@dataclass(frozen=True)
class MaskGeometry:
    """Pixel-space shape measurements of a lesion mask."""

    area_px: int
    perimeter_px: float
    centroid: tuple[float, float]
    ellipse_major_px: float
    ellipse_minor_px: float
    max_feret_px: float


def _chain_code(mask: np.ndarray, start: tuple[int, int]) -> list[int]:
    """Closed chain code of the outer contour of the component at ``start``.

    Moore-neighbour walk over (pixel, backtrack-direction) states; the walk
    is deterministic, so the first repeated state closes the contour and the
    repeating cycle is returned. An isolated pixel yields an empty chain.
    """
    height, width = mask.shape

    def step(state):
        (r0, c0), backtrack = state
        for k in range(1, 9):
            d = (backtrack + k) % 8
            r, c = r0 + _NEIGHBOURS[d][0], c0 + _NEIGHBOURS[d][1]
            if 0 <= r < height and 0 <= c < width and mask[r, c]:
                last_bg = (backtrack + k - 1) % 8
                delta = (
                    r0 + _NEIGHBOURS[last_bg][0] - r,
                    c0 + _NEIGHBOURS[last_bg][1] - c,
                )
                return d, ((r, c), _NEIGHBOURS.index(delta))
        return None, None

    seen: dict = {}
    moves: list[int] = []
    state = (start, 6)  # backtrack west of the topmost-leftmost pixel
    while state not in seen:
        seen[state] = len(moves)
        move, nxt = step(state)
        if move is None:
            return []
        moves.append(move)
        state = nxt
    return moves[seen[state]:]


def _perimeter_px(mask: np.ndarray) -> float:
    """Smoothed outer-contour length, floored at the isoperimetric bound."""
    labels, n_components = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    total = 0.0
    for component in range(1, n_components + 1):
        component_mask = labels == component
        rows, cols = np.nonzero(component_mask)
        first = np.lexsort((cols, rows))[0]
        chain = _chain_code(component_mask, (int(rows[first]), int(cols[first])))
        n_diagonal = sum(1 for move in chain if move % 2 == 1)
        n_orthogonal = len(chain) - n_diagonal
        total += _STEP_ORTHOGONAL * n_orthogonal + _STEP_DIAGONAL * n_diagonal + math.pi
    # Enforce the isoperimetric inequality: no mask is rounder than a disk.
    return max(total, math.sqrt(4.0 * math.pi * mask.sum()))


_PIXEL_CORNERS = np.array([[-0.5, -0.5], [-0.5, 0.5], [0.5, -0.5], [0.5, 0.5]])


def _max_feret_px(mask: np.ndarray) -> float:
    """Largest caliper distance across the pixel region.

    Measured between corner points of boundary pixels, so a pixel counts
    with its full square extent; the centre-point distance would undershoot
    the diameter of a rasterized disk by up to a pixel and fall below the
    moment-fit axes.
    """
    boundary = mask & ~ndimage.binary_erosion(mask)
    centers = np.argwhere(boundary).astype(np.float64)
    points = (centers[:, None, :] + _PIXEL_CORNERS[None, :, :]).reshape(-1, 2)
    if len(points) > 8:
        try:
            points = points[ConvexHull(points).vertices]
        except QhullError:
            pass  # degenerate geometry: brute force below
    diffs = points[:, None, :] - points[None, :, :]
    return float(np.sqrt((diffs**2).sum(axis=-1).max()))


def mask_geometry(mask: np.ndarray) -> MaskGeometry:
    """Measure area, smoothed perimeter, moment-fit ellipse axes and the
    maximum Feret diameter of a boolean mask."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMaskError("empty lesion mask")
    rows, cols = np.nonzero(mask)
    area = int(len(rows))
    centroid_r = float(rows.mean())
    centroid_c = float(cols.mean())

    dr = rows - centroid_r
    dc = cols - centroid_c
    covariance = np.array(
        [
            [np.mean(dr * dr), np.mean(dr * dc)],
            [np.mean(dr * dc), np.mean(dc * dc)],
        ]
    )
    eigenvalues = np.linalg.eigvalsh(covariance)
    minor_px = 4.0 * math.sqrt(max(eigenvalues[0], 0.0))
    major_px = 4.0 * math.sqrt(max(eigenvalues[1], 0.0))

    return MaskGeometry(
        area_px=area,
        perimeter_px=_perimeter_px(mask),
        centroid=(centroid_r, centroid_c),
        ellipse_major_px=major_px,
        ellipse_minor_px=minor_px,
        max_feret_px=_max_feret_px(mask),
    )


def _sector_std_max(lab: np.ndarray, mask: np.ndarray, centroid: tuple[float, float]) -> float:
    """Max across-sector standard deviation of per-sector mean LAB values.

    Interior pixels are split into 8 equal angular sectors about the
    centroid; empty sectors are skipped; fewer than two populated sectors
    yield zero.
    """
    rows, cols = np.nonzero(mask)
    theta = np.arctan2(rows - centroid[0], cols - centroid[1])
    sector = np.clip(
        ((theta + math.pi) / (2.0 * math.pi / _SECTOR_COUNT)).astype(np.int64),
        0,
        _SECTOR_COUNT - 1,
    )
    values = lab[rows, cols]
    means = []
    for s in range(_SECTOR_COUNT):
        in_sector = sector == s
        if in_sector.any():
            means.append(values[in_sector].mean(axis=0))
    if len(means) < 2:
        return 0.0
    return float(np.std(np.stack(means), axis=0).max())


def compute_attributes(image: LesionImage) -> AttributeVector:
    """Compute all 16 attributes of a lesion image, in canonical order."""
    mask = image.mask
    if mask[0, :].any() or mask[-1, :].any() or mask[:, 0].any() or mask[:, -1].any():
        raise LesionNotContainedError(
            f"{image.image_id}: lesion not fully contained in the image"
        )
    exterior = ~mask
    if not exterior.any():
        raise LesionNotContainedError(f"{image.image_id}: empty exterior")

    geometry = mask_geometry(mask)
    scale = image.scale_mm_per_px

    lab = rgb_image_to_lab(image.pixels)
    interior_lab = lab[mask]
    exterior_lab = lab[exterior]

    interior_mean = interior_lab.mean(axis=0)
    exterior_mean = exterior_lab.mean(axis=0)
    interior_std = interior_lab.std(axis=0)

    # Ring of "immediate surrounding skin": exterior pixels within a fifth
    # of the equivalent radius (at least 2 px) of the lesion boundary.
    equivalent_radius = math.sqrt(geometry.area_px / math.pi)
    ring_width = max(_RING_WIDTH_FRACTION * equivalent_radius, _RING_WIDTH_MIN_PX)
    distance_to_lesion = ndimage.distance_transform_edt(exterior)
    ring = exterior & (distance_to_lesion <= ring_width)
    ring_mean_l = lab[ring][:, 0].mean()

    area_mm2 = geometry.area_px * scale * scale
    perimeter_mm = geometry.perimeter_px * scale
    norm_border = 1.0 - 4.0 * math.pi * geometry.area_px / geometry.perimeter_px**2
    norm_border = min(max(norm_border, 0.0), math.nextafter(1.0, 0.0))

    values = {
        "areaMM2": area_mm2,
        "minorAxisMM": geometry.ellipse_minor_px * scale,
        "norm_color": float(np.linalg.norm(interior_std)),
        "radial_color_std_max": _sector_std_max(lab, mask, geometry.centroid),
        "deltaB": float(interior_mean[2] - exterior_mean[2]),
        "deltaL": float(interior_mean[0] - exterior_mean[0]),
        "deltaLB": float(interior_mean[0] - ring_mean_l),
        "stdLExt": float(exterior_lab[:, 0].std()),
        "clin_size_long_diam_mm": geometry.max_feret_px * scale,
        "perimeterMM": perimeter_mm,
        "norm_border": norm_border,
        "area_perim_ratio": perimeter_mm / area_mm2,
        "A": float(interior_mean[1]),
        "Aext": float(exterior_mean[1]),
        "B": float(interior_mean[2]),
        "Bext": float(exterior_mean[2]),
    }
    return AttributeVector([values[name] for name in ATTRIBUTE_NAMES]).validate()
