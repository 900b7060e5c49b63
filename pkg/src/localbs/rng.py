"""Seed schedule and random streams.

Every random quantity in the package is drawn from a ``numpy.random.Generator``
whose stream is addressed by ``(seed, label, index...)``::

    stream(seed, "coupling", 3)   # replica 3 of the coupling command

The label is hashed with CRC32 and placed, together with the integer indices,
in the ``spawn_key`` of a :class:`numpy.random.SeedSequence`.  Streams with
different addresses are statistically independent, and a stream depends only
on its address, never on how many workers run or in which order.

Coupled chains additionally need the shared fitness vectors ``K(t, v)(u)``
(IID Exp(1) indexed by time, centre vertex and neighbourhood member).  These
come from a counter-based field: a SplitMix64 hash of ``(key, t, v, u)``
turned into a uniform and then into Exp(1) by inversion.  Any two chains
reading the same key see exactly the same ``K``.
"""
from __future__ import annotations

import zlib

import numba
import numpy as np

__all__ = ["stream", "field_key", "field_exponential", "spawn_key"]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 1.0 / 9007199254740992.0


def spawn_key(label: str, *index: int) -> tuple[int, ...]:
    """Spawn key for a labelled stream; labels are hashed with CRC32."""
    for i in index:
        if int(i) < 0:
            raise ValueError(f"stream index must be nonnegative, got {i}")
    return (zlib.crc32(label.encode("utf-8")),) + tuple(int(i) for i in index)


def stream(seed: int, label: str = "main", *index: int) -> np.random.Generator:
    """Independent PCG64 generator for the address ``(seed, label, *index)``."""
    seq = np.random.SeedSequence(int(seed), spawn_key=spawn_key(label, *index))
    return np.random.Generator(np.random.PCG64(seq))


def field_key(rng: np.random.Generator) -> np.uint64:
    """Draw a 64-bit key for a counter-based Exp(1) field."""
    return np.uint64(rng.integers(0, 2**64, dtype=np.uint64))


@numba.njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def field_exponential(key, t, v, u):
    """Exp(1) variate K(t, v)(u) of the field identified by ``key``."""
    h = _mix(np.uint64(key) + _GOLDEN)
    h = _mix(h + np.uint64(t) * _GOLDEN + np.uint64(1))
    h = _mix(h + np.uint64(v) * _GOLDEN + np.uint64(2))
    h = _mix(h + np.uint64(u) * _GOLDEN + np.uint64(3))
    uniform = (float(h >> np.uint64(11)) + 0.5) * _TWO_M53
    return -np.log(uniform)
