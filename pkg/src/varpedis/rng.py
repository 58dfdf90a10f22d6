"""Seed derivation for per-class random streams.

Determinism is a contract, so the scheme is fixed here and must not change
between releases without a format/version bump:

* Each (root seed, class label) pair gets its own independent stream.  The
  stream seed is the first 8 bytes, read little-endian, of
  ``SHA-256(domain || 0x00 || root_seed as u64-LE || label as UTF-8)``.
* The bit generator is numpy's PCG64, constructed from that 64-bit seed
  (which numpy feeds through its stable SeedSequence expansion).
* ``domain`` separates unrelated uses of the same root seed (selection
  sampling vs. synthetic population generation) so they never share a stream.

Because the stream depends only on (seed, label), per-class work can run in
any order or in parallel without changing results, and adding or removing
other classes from a dataset never perturbs a class's selection.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

DOMAIN_SELECT = "varpedis.select.class"
DOMAIN_POPULATION = "varpedis.population.class"

_U64_MAX = 2**64 - 1


def stream_seed(root_seed: int, label: str, domain: str) -> int:
    """Derive the 64-bit stream seed for one class under one domain."""
    if not 0 <= root_seed <= _U64_MAX:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {root_seed}")
    h = hashlib.sha256()
    h.update(domain.encode("utf-8"))
    h.update(b"\x00")
    h.update(struct.pack("<Q", root_seed))
    h.update(label.encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")


def class_stream(root_seed: int, label: str, domain: str = DOMAIN_SELECT) -> np.random.Generator:
    """Return the independent PCG64 stream for one class."""
    return np.random.Generator(np.random.PCG64(stream_seed(root_seed, label, domain)))
