"""Stable 64-bit hashing for ids.

All ids emitted by the pipeline (cluster ids, slice ids) come from keyed
blake2b with a pinned seed, so outputs are byte-reproducible across runs,
processes and platforms.
"""

import hashlib

_SEED = b"slicemine-v1"
_SEP = b"\x1f"


def stable_hash64(*parts: str) -> int:
    """Hash the given string parts to an unsigned 64-bit integer."""
    h = hashlib.blake2b(digest_size=8, key=_SEED)
    for part in parts:
        h.update(part.encode("utf-8"))
        h.update(_SEP)
    return int.from_bytes(h.digest(), "big")


def stable_hex(*parts: str) -> str:
    """Hash the given string parts to a fixed-width 16-char hex id."""
    return format(stable_hash64(*parts), "016x")
