"""Deterministic random streams.

Every stochastic step in the pipeline (k-means seeding, mock services,
forward-noise injection) draws from a Philox counter-based generator
keyed by the 64-bit run seed plus a tuple of stream labels. Philox is
chosen deliberately: its output is a pure function of (key, counter), so
the same seed reproduces the same stream on any platform. The numpy
default generator seeded from OS entropy is never used.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream_key", "make_rng", "derive_seed"]


def stream_key(seed: int, *labels: object) -> int:
    """128-bit Philox key derived from a seed and a label tuple.

    Labels are stringified and joined with a separator byte before
    hashing, so ("a", "bc") and ("ab", "c") map to distinct keys.
    """
    digest = hashlib.sha256()
    digest.update(str(int(seed)).encode("utf-8"))
    for label in labels:
        digest.update(b"\x1f")
        digest.update(str(label).encode("utf-8"))
    return int.from_bytes(digest.digest()[:16], "little")


def make_rng(seed: int, *labels: object) -> np.random.Generator:
    """Independent named substream for the given seed and labels."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *labels)))


def derive_seed(seed: int, *labels: object) -> int:
    """64-bit sub-seed for components that accept a plain integer seed."""
    return stream_key(seed, *labels) & 0xFFFFFFFFFFFFFFFF
