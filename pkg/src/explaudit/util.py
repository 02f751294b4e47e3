"""Shared helpers: derived RNG streams and canonical config digests."""

from __future__ import annotations

import hashlib
import json

import numpy as np


def stream_key(part: object) -> int:
    """Map an arbitrary key part to a stable 32-bit integer."""
    if isinstance(part, (int, np.integer)):
        return int(part) % (2**32)
    digest = hashlib.sha256(str(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def derived_rng(*parts: object) -> np.random.Generator:
    """Build a Generator from a tuple of key parts.

    The stream depends only on the key tuple, never on call order or
    scheduling, so parallel workers that derive their own streams produce
    the same results as a serial run.
    """
    return np.random.default_rng([stream_key(p) for p in parts])


def config_digest(payload: object) -> str:
    """Short stable hash of a JSON-serializable configuration."""
    canonical = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
