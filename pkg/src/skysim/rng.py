"""Deterministic named RNG substreams derived from a single root seed.

Every source of randomness in a run (world construction, channel fading,
traffic arrivals, policy sampling, weight init) pulls from its own named
stream so components stay independently reproducible.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_key(name: str) -> int:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(root_seed: int, name: str) -> np.random.Generator:
    """Generator for the named substream of ``root_seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(root_seed), _name_key(name)]))
