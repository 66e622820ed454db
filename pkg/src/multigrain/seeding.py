"""Deterministic seed derivation.

Every stochastic choice in the pipeline draws from a `random.Random`
seeded by a stable hash of (global seed, unit key, purpose), so results
are identical across runs, record order, and worker counts.
"""

from __future__ import annotations

import hashlib
import random

_SEP = b"\x1f"


def derive_seed(*parts) -> int:
    """64-bit seed from an ordered tuple of key parts."""
    key = _SEP.join(str(p).encode("utf-8") for p in parts)
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")


def rng_for(*parts) -> random.Random:
    return random.Random(derive_seed(*parts))
