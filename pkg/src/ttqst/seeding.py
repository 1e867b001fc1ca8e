"""Deterministic seed streams.

Every random draw in the package comes from a ``numpy.random.Generator``
backed by the counter-based Philox bit generator. Independent streams are
keyed by ``(master_seed, tag, index)`` through :func:`sub_seed`, so parallel
trials never share a generator and any single trial can be replayed from its
sub-seed alone.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def sub_seed(master_seed: int, tag: str, index: int = 0) -> int:
    """Derive a 64-bit child seed from ``(master_seed, tag, index)``.

    The mix is BLAKE2b with an 8-byte digest over the UTF-8 string
    ``"{master_seed}|{tag}|{index}"``, read as a little-endian unsigned
    integer. It is stable across platforms and Python versions.
    """
    if master_seed < 0 or index < 0:
        raise ValueError("seeds and stream indices must be nonnegative")
    key = f"{int(master_seed) & _MASK64}|{tag}|{int(index)}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def make_rng(seed: int) -> np.random.Generator:
    """Return a Philox-backed generator for ``seed``."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    return np.random.Generator(np.random.Philox(int(seed) & _MASK64))


def stream(master_seed: int, tag: str, index: int = 0) -> np.random.Generator:
    return make_rng(sub_seed(master_seed, tag, index))
