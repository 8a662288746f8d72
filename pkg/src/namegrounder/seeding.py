"""Deterministic seed derivation.

Every random draw in the package flows through a named sub-stream derived
here. String keys are hashed with SHA-256, never Python's salted hash(), so
identical inputs give identical streams across processes and platforms.
"""
from __future__ import annotations

import hashlib
import random


def stable_int(*parts: object) -> int:
    """Collapse a key path into a stable 63-bit integer seed."""
    text = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def rng(*parts: object) -> random.Random:
    """A `random.Random` seeded from a named sub-stream."""
    return random.Random(stable_int(*parts))
