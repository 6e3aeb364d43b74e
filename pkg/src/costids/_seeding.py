"""Named random streams derived from a single root seed."""

import zlib

import numpy as np


def stream(seed, name, index=0):
    """Return a Generator keyed by ``(seed, name, index)``.

    The same triple always yields the same stream, independent of how many
    other streams were created before it.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, key, int(index)]))
