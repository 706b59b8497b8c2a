import logging

import numpy as np
import pytest

from lesionseek.core import ATTRIBUTE_NAMES, AttributeVector
from lesionseek.embedding import (
    CorpusStats,
    TunedSimProvider,
    UntunedSimProvider,
)
from lesionseek.errors import DataError

from conftest import random_lesion


@pytest.fixture(scope="module")
def corpus():
    images = [random_lesion(s) for s in range(24)]
    from lesionseek.oracle import compute_attributes

    vectors = [compute_attributes(i) for i in images]
    return images, CorpusStats.from_vectors(vectors)


def test_unit_norm_for_both_providers(corpus):
    images, stats = corpus
    tuned = TunedSimProvider(stats, seed=1)
    untuned = UntunedSimProvider(seed=1)
    for image in images[:6]:
        for vector in (
            tuned.embed_image(image),
            tuned.embed_image_attribute(image, "deltaL"),
            untuned.embed_image(image),
        ):
            assert np.linalg.norm(vector) == pytest.approx(1.0, abs=1e-6)
            assert vector.shape == (64,)


def test_dim_bounds():
    stats = CorpusStats(means=np.zeros(16), sds=np.ones(16))
    with pytest.raises(DataError, match="dimension"):
        TunedSimProvider(stats, d=16)
    with pytest.raises(DataError, match="dimension"):
        UntunedSimProvider(d=31)
    assert TunedSimProvider(stats, d=32).dim() == 32  # projection path
    assert TunedSimProvider(stats, d=64).dim() == 64  # padding path


def test_identical_pixels_identical_embeddings(corpus):
    images, stats = corpus
    tuned = TunedSimProvider(stats, seed=3, noise_sd=0.0)
    image = images[0]
    clone = type(image)(image.image_id, image.patient_id, image.pixels.copy(),
                        image.mask.copy(), image.scale_mm_per_px)
    assert np.array_equal(tuned.embed_image(image), tuned.embed_image(clone))

    untuned = UntunedSimProvider(seed=3)
    assert np.array_equal(untuned.embed_image(image), untuned.embed_image(clone))


def test_noise_is_deterministic_per_image(corpus):
    images, stats = corpus
    one = TunedSimProvider(stats, seed=9, noise_sd=0.1)
    two = TunedSimProvider(stats, seed=9, noise_sd=0.1)
    assert np.array_equal(one.embed_image(images[0]), two.embed_image(images[0]))
    other_seed = TunedSimProvider(stats, seed=10, noise_sd=0.1)
    assert not np.array_equal(one.embed_image(images[0]), other_seed.embed_image(images[0]))


def test_gain_one_collapses_to_image_embedding(corpus):
    images, stats = corpus
    provider = TunedSimProvider(stats, seed=2, attr_gain=1.0)
    for attribute in ("areaMM2", "stdLExt", "Bext"):
        assert np.array_equal(
            provider.embed_image(images[1]),
            provider.embed_image_attribute(images[1], attribute),
        )


def test_gain_specializes_toward_the_attribute(corpus):
    """Two images equal in one attribute but different elsewhere score a
    higher attribute-specialized cosine than plain image cosine."""
    _, stats = corpus
    provider = TunedSimProvider(stats, seed=4, noise_sd=0.0, attr_gain=8.0)

    z = np.zeros(16)
    z[3] = 1.25  # radial_color_std_max matches exactly
    other = z.copy()
    other[0] = 2.0  # areaMM2 differs
    other[7] = -1.5  # stdLExt differs
    visual = np.full(48, 0.2)

    base_i = np.concatenate([z, visual])
    base_j = np.concatenate([other, visual])
    attribute = "radial_color_std_max"
    index = 3

    def specialize(vector):
        weighted = vector.copy()
        weighted[:16] = vector[:16] / provider.attr_gain
        weighted[index] = vector[index] * provider.attr_gain
        return weighted / np.linalg.norm(weighted)

    plain = np.dot(base_i / np.linalg.norm(base_i), base_j / np.linalg.norm(base_j))
    boosted = np.dot(specialize(base_i), specialize(base_j))
    assert boosted > plain


def test_grounding_monotonicity_same_side(corpus):
    """With noise off, a larger same-side attribute gap means a lower
    attribute-specialized cosine (all other features equal)."""
    images, stats = corpus
    provider = TunedSimProvider(stats, seed=5, noise_sd=0.0, attr_gain=4.0)
    attribute = "deltaL"
    index = ATTRIBUTE_NAMES.index(attribute)

    rng = np.random.default_rng(0)
    for _ in range(50):
        z_query = rng.normal()
        gap_near, gap_far = sorted(rng.uniform(0.05, 2.5, size=2))
        side = rng.choice([-1.0, 1.0])
        rest = rng.normal(size=63)

        def vector(z_value):
            v = np.insert(rest.copy(), index, z_value)
            w = v.copy()
            w[:16] = v[:16] / provider.attr_gain
            w[index] = v[index] * provider.attr_gain
            return w / np.linalg.norm(w)

        query = vector(z_query)
        near = vector(z_query + side * gap_near)
        far = vector(z_query + side * gap_far)
        assert np.dot(query, near) > np.dot(query, far)


def test_degenerate_corpus_stats_zero_dim_and_warn(corpus, caplog):
    images, _ = corpus
    means = np.zeros(16)
    sds = np.ones(16)
    sds[5] = 0.0  # deltaL degenerate
    with caplog.at_level(logging.WARNING, logger="lesionseek.embedding"):
        provider = TunedSimProvider(CorpusStats(means=means, sds=sds), seed=0, noise_sd=0.0)
    assert provider.degenerate_attributes == {5}
    assert "deltaL" in caplog.text
    embedded = provider.embed_image(images[0])
    assert embedded[5] == 0.0


def test_untuned_is_attribute_blind(corpus):
    images, _ = corpus
    provider = UntunedSimProvider(seed=6)
    a = provider.embed_image_attribute(images[2], "areaMM2")
    b = provider.embed_image_attribute(images[2], "Bext")
    assert np.array_equal(a, b)
    assert np.array_equal(a, provider.embed_image(images[2]))
    with pytest.raises(DataError):
        provider.embed_image_attribute(images[2], "nope")


def test_untuned_distinct_images_not_identical(corpus):
    images, _ = corpus
    provider = UntunedSimProvider(seed=6)
    sim = float(np.dot(provider.embed_image(images[0]), provider.embed_image(images[1])))
    assert sim < 1.0 - 1e-6


def test_attribute_source_is_pluggable(corpus):
    images, stats = corpus
    calls = []

    def source(image):
        calls.append(image.image_id)
        return AttributeVector(np.linspace(0.1, 1.6, 16))

    provider = TunedSimProvider(stats, seed=7, attribute_source=source)
    provider.embed_image(images[0])
    provider.embed_image_attribute(images[0], "B")  # cache hit, no second call
    assert calls == [images[0].image_id]
