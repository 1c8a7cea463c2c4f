"""Named, splittable random streams.

Every stream is a Philox (counter-based) generator keyed by a
``SeedSequence`` built from ``(master_seed, len(keys), *keys)``.  String keys are
mapped to integers with CRC-32 so the derivation is stable across Python
processes (``hash()`` is salted and would not be).

    stream(7, "collect", 3, 12)   # meta-iteration 3, task 12

Two calls with the same arguments always return generators in the same
state; changing any key yields an independent stream.  This is what lets
per-task work run in any order without perturbing results.
"""

from __future__ import annotations

import zlib

import numpy as np

MASK64 = (1 << 64) - 1


def _key(k) -> int:
    if isinstance(k, (bool, np.bool_)):
        return int(k)
    if isinstance(k, (int, np.integer)):
        return int(k) & MASK64
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    raise TypeError(f"stream keys must be int or str, got {type(k).__name__}")


def stream(seed: int, *keys) -> np.random.Generator:
    # the key count goes first: SeedSequence zero-pads, so (s, k) and (s, k, 0)
    # would otherwise share a stream
    entropy = [_key(seed), len(keys)] + [_key(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
