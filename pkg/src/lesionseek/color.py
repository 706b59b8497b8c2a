"""sRGB to CIE L*a*b* conversion (D65 reference white, 2 degree observer)."""

from __future__ import annotations

import numpy as np

# sRGB linear RGB -> XYZ, D65
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)

_WHITE_D65 = np.array([0.95047, 1.00000, 1.08883])

_DELTA = 6.0 / 29.0


def _srgb_to_linear(c: np.ndarray) -> np.ndarray:
    return np.where(c > 0.04045, ((c + 0.055) / 1.055) ** 2.4, c / 12.92)


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3.0 * _DELTA * _DELTA) + 4.0 / 29.0)


def rgb_image_to_lab(pixels: np.ndarray) -> np.ndarray:
    """Convert an array of 8-bit RGB values (..., 3) to L*a*b* floats.

    L* lies in [0, 100]; a* and b* are unbounded channel-opponent axes.
    """
    c = np.asarray(pixels, dtype=np.float64) / 255.0
    xyz = _srgb_to_linear(c) @ _RGB_TO_XYZ.T
    f = _lab_f(xyz / _WHITE_D65)
    lum = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([lum, a, b], axis=-1)


def rgb_to_lab(rgb) -> tuple[float, float, float]:
    """Convert one (r, g, b) triple of 0..255 integers to (L*, a*, b*)."""
    r, g, b = rgb
    for name, v in (("r", r), ("g", g), ("b", b)):
        if not 0 <= v <= 255:
            raise ValueError(f"channel {name} out of range [0, 255]: {v}")
    lab = rgb_image_to_lab(np.array([r, g, b], dtype=np.float64))
    return float(lab[0]), float(lab[1]), float(lab[2])
