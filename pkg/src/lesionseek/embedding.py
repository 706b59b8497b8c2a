"""Embedding providers: the contract between images and vector databases.

Two deterministic desk-scale providers are defined. The tuned provider
simulates a model fine-tuned on the 16 attributes: its vectors carry the
z-scored attribute values next to generic visual features, and the
attribute-specialized variant reweights the attribute dimensions. The
untuned provider is a seeded random projection of raw pixels and is blind
to attributes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from lesionseek.core import (
    ATTRIBUTE_NAMES,
    AttributeVector,
    LesionImage,
    N_ATTRIBUTES,
    attribute_index,
)
from lesionseek.errors import DataError
from lesionseek.oracle import compute_attributes
from lesionseek.rng import rng_for

log = logging.getLogger(__name__)

_PATCH_GRID = 4  # visual features: mean/sd over a 4x4 patch grid
_THUMB_SIDE = 16  # untuned provider: 16x16 grayscale thumbnail

MIN_DIMENSION = 32

DEFAULT_DIMENSION = 64
DEFAULT_NOISE_SD = 0.05
DEFAULT_ATTR_GAIN = 4.0
DEFAULT_VISUAL_SCALE = 1.0


class EmbeddingProvider(Protocol):
    """Anything that maps images (optionally with an attribute) to vectors."""

    def dim(self) -> int: ...

    def embed_image(self, image: LesionImage) -> np.ndarray: ...

    def embed_image_attribute(self, image: LesionImage, attribute: str) -> np.ndarray: ...


@dataclass(frozen=True)
class CorpusStats:
    """Per-attribute mean and population standard deviation over a corpus."""

    means: np.ndarray
    sds: np.ndarray

    @classmethod
    def from_attribute_matrix(cls, matrix) -> "CorpusStats":
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[1] != N_ATTRIBUTES:
            raise DataError(f"attribute matrix must be n x {N_ATTRIBUTES}, got {m.shape}")
        return cls(means=m.mean(axis=0), sds=m.std(axis=0))

    @classmethod
    def from_vectors(cls, vectors: list[AttributeVector]) -> "CorpusStats":
        return cls.from_attribute_matrix(np.stack([v.values for v in vectors]))


def _normalize(vector: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vector)
    if not norm > 0:
        raise DataError("cannot normalize an all-zero embedding")
    return vector / norm


def _to_grayscale(pixels: np.ndarray) -> np.ndarray:
    return np.asarray(pixels, dtype=np.float64).mean(axis=2) / 255.0


def _block_means(gray: np.ndarray, grid: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell mean and sd of a grid x grid partition of the image."""
    h, w = gray.shape
    row_edges = (np.arange(grid + 1) * h) // grid
    col_edges = (np.arange(grid + 1) * w) // grid
    means = np.empty((grid, grid))
    sds = np.empty((grid, grid))
    for i in range(grid):
        for j in range(grid):
            block = gray[row_edges[i] : row_edges[i + 1], col_edges[j] : col_edges[j + 1]]
            means[i, j] = block.mean()
            sds[i, j] = block.std()
    return means.ravel(), sds.ravel()


class TunedSimProvider:
    """Attribute-grounded reference provider.

    embed_image concatenates the image's z-scored attribute values with
    visual patch features, adds per-image Gaussian noise, and normalizes.
    embed_image_attribute is the same vector with the chosen attribute
    dimension boosted by ``attr_gain`` and the other attribute dimensions
    damped by its inverse, renormalized.
    """

    def __init__(
        self,
        stats: CorpusStats,
        d: int = DEFAULT_DIMENSION,
        noise_sd: float = DEFAULT_NOISE_SD,
        attr_gain: float = DEFAULT_ATTR_GAIN,
        seed: int = 0,
        attribute_source: Callable[[LesionImage], AttributeVector] = compute_attributes,
        visual_scale: float = DEFAULT_VISUAL_SCALE,
    ):
        if d < MIN_DIMENSION:
            raise DataError(f"dimension must be at least {MIN_DIMENSION}, got {d}")
        if noise_sd < 0:
            raise DataError("noise_sd must be non-negative")
        if attr_gain <= 0:
            raise DataError("attr_gain must be positive")
        self.stats = stats
        self._d = d
        self.noise_sd = noise_sd
        self.attr_gain = attr_gain
        self.seed = seed
        self.visual_scale = visual_scale
        self.attribute_source = attribute_source
        self.degenerate_attributes = frozenset(
            int(i) for i in np.nonzero(stats.sds == 0)[0]
        )
        if self.degenerate_attributes:
            log.warning(
                "corpus stats have zero variance for %s; those dimensions are zeroed",
                [ATTRIBUTE_NAMES[i] for i in sorted(self.degenerate_attributes)],
            )
        n_visual = 2 * _PATCH_GRID * _PATCH_GRID
        visual_dim = d - N_ATTRIBUTES
        if visual_dim < n_visual:
            # seeded Gaussian projection down to the available visual dims
            self._projection = rng_for(seed, "visual-projection").normal(
                scale=1.0 / np.sqrt(n_visual), size=(n_visual, visual_dim)
            )
        else:
            self._projection = None
        self._cache: dict[str, np.ndarray] = {}

    def dim(self) -> int:
        return self._d

    def _base_vector(self, image: LesionImage) -> np.ndarray:
        cached = self._cache.get(image.image_id)
        if cached is not None:
            return cached
        attrs = self.attribute_source(image).values
        safe_sds = np.where(self.stats.sds > 0, self.stats.sds, 1.0)
        z = (attrs - self.stats.means) / safe_sds
        z[self.stats.sds == 0] = 0.0

        means, sds = _block_means(_to_grayscale(image.pixels), _PATCH_GRID)
        # z-scored attributes carry unit variance per dimension; the visual
        # block is damped so attribute structure dominates the cosine.
        visual = self.visual_scale * np.concatenate([means, sds])
        if self._projection is not None:
            visual = visual @ self._projection
        else:
            visual = np.pad(visual, (0, self._d - N_ATTRIBUTES - len(visual)))

        base = np.concatenate([z, visual])
        if self.noise_sd > 0:
            base = base + rng_for(self.seed, "noise", image.image_id).normal(
                scale=self.noise_sd, size=self._d
            )
        self._cache[image.image_id] = base
        return base

    def embed_image(self, image: LesionImage) -> np.ndarray:
        return _normalize(self._base_vector(image))

    def embed_image_attribute(self, image: LesionImage, attribute: str) -> np.ndarray:
        index = attribute_index(attribute)
        base = self._base_vector(image)
        weighted = base.copy()
        weighted[:N_ATTRIBUTES] = base[:N_ATTRIBUTES] / self.attr_gain
        weighted[index] = base[index] * self.attr_gain
        return _normalize(weighted)


class UntunedSimProvider:
    """Attribute-blind baseline: seeded random projection of raw pixels."""

    def __init__(self, d: int = DEFAULT_DIMENSION, seed: int = 0):
        if d < MIN_DIMENSION:
            raise DataError(f"dimension must be at least {MIN_DIMENSION}, got {d}")
        self._d = d
        self.seed = seed
        n_inputs = _THUMB_SIDE * _THUMB_SIDE
        self._projection = rng_for(seed, "pixel-projection").normal(
            scale=1.0 / np.sqrt(n_inputs), size=(n_inputs, d)
        )
        self._cache: dict[str, np.ndarray] = {}

    def dim(self) -> int:
        return self._d

    def embed_image(self, image: LesionImage) -> np.ndarray:
        cached = self._cache.get(image.image_id)
        if cached is None:
            gray = _to_grayscale(image.pixels)
            thumb, _ = _block_means(gray, _THUMB_SIDE)
            cached = _normalize(thumb @ self._projection)
            self._cache[image.image_id] = cached
        return cached

    def embed_image_attribute(self, image: LesionImage, attribute: str) -> np.ndarray:
        attribute_index(attribute)  # validate the name, then ignore it
        return self.embed_image(image)
