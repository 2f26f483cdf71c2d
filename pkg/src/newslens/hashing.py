"""Fixed 64-bit FNV-1a feature hashing.

Python's builtin ``hash`` is salted per process, so hashed vocabularies built
with it would not reproduce across runs or machines. FNV-1a with an explicit
seed prefix is stable everywhere and cheap enough for corpus-scale use.
"""

from __future__ import annotations

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

DEFAULT_HASH_SEED = 0x6E65_776C_656E_73  # arbitrary fixed constant


def fnv1a64(data: bytes, seed: int = DEFAULT_HASH_SEED) -> int:
    h = FNV_OFFSET
    for b in seed.to_bytes(8, "little", signed=False):
        h = ((h ^ b) * FNV_PRIME) & _MASK64
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & _MASK64
    return h


def hash_bucket(feature: str, buckets: int, seed: int = DEFAULT_HASH_SEED) -> int:
    return fnv1a64(feature.encode("utf-8"), seed) % buckets
