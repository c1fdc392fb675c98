"""Deterministic seed derivation.

Every random draw in a scenario traces back to the single master seed
through a labelled hash, so independent streams (data generation,
weight init, per-worker shuffling, attack directions) never collide
and never depend on call order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def child_seed(master: int, *tags) -> int:
    """Derive a 64-bit seed from the master seed and a label path."""
    h = hashlib.sha256()
    h.update(str(int(master)).encode())
    for tag in tags:
        h.update(b"/")
        h.update(str(tag).encode())
    return int.from_bytes(h.digest()[:8], "big")


def rng_for(master: int, *tags) -> np.random.Generator:
    """Generator seeded from child_seed(master, *tags)."""
    return np.random.default_rng(child_seed(master, *tags))
