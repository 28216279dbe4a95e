"""Deterministic random streams keyed by (seed, labels), independent of execution order."""

from __future__ import annotations

import hashlib

import numpy as np


def _label_word(label) -> int:
    digest = hashlib.sha256(repr(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def substream(seed: int, *labels) -> np.random.Generator:
    """A generator determined only by ``seed`` and the labels, so parallel workers agree."""
    words = [int(seed) & 0xFFFFFFFF, *(_label_word(x) for x in labels)]
    return np.random.default_rng(np.random.SeedSequence(words))
