"""Deterministic named random substreams.

One user-facing seed fans out into independent generators keyed by string or
integer tokens, so changing how many batches or queries run never perturbs
the draws of the others. Token identity is by str(): substream(0, 1) and
substream(0, "1") coincide.
"""

from __future__ import annotations

import hashlib

import numpy as np


def child_sequence(seed: int, *tokens) -> np.random.SeedSequence:
    key = tuple(
        int.from_bytes(hashlib.sha256(str(t).encode("utf-8")).digest()[:4], "little")
        for t in tokens
    )
    return np.random.SeedSequence(entropy=int(seed), spawn_key=key)


def substream(seed: int, *tokens) -> np.random.Generator:
    """Independent generator for (seed, *tokens)."""
    return np.random.default_rng(child_sequence(seed, *tokens))
