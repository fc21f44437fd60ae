"""Content digests: 64-bit FNV-1a, cheap and deterministic.

Used for corruption detection and reproducibility checks, not security.
"""

from __future__ import annotations

import json

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x00000100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes, seed: int = _FNV_OFFSET) -> int:
    h = seed
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK
    return h


def fnv1a64_hex(data: bytes) -> str:
    return f"{fnv1a64(data):016x}"


def canonical_json(obj) -> bytes:
    """Stable byte serialization for digesting structured values."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def digest_of(obj) -> str:
    return fnv1a64_hex(canonical_json(obj))
