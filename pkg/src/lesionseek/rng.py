"""Deterministic RNG streams derived from (seed, key...) tuples.

Per-item streams keep batch stages order-independent: parallel workers can
process items in any order and still produce identical output.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def _entropy(part) -> int:
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()[:8]
        return int.from_bytes(digest, "little")
    return int(part) & _MASK64


def rng_for(*parts) -> np.random.Generator:
    """A generator seeded by the hash of the given ints and strings."""
    return np.random.default_rng(np.random.SeedSequence([_entropy(p) for p in parts]))
