"""Named random streams.

Replication ``r`` of stream ``name`` under root seed ``s`` is a PCG64 generator
seeded with ``SeedSequence([s, crc32(name), r])``.  Streams are independent of
each other and of the number of replications, which is what lets coupled runs
hold every stream but one fixed.
"""
from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("arrivals", "observation", "process", "channel", "policy", "access", "initial", "prehistory")


def stream_id(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, name: str, replication: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, stream_id(name), int(replication)])
    return np.random.Generator(np.random.PCG64(ss))
