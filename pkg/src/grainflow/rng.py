"""Seeding discipline.

All randomness funnels through one root seed.  Component substreams are
derived with ``numpy.random.SeedSequence`` keyed on (root_seed, *stream ids),
so e.g. trajectory i always sees the same stream regardless of how many
other components draw random numbers.  Integer stream ids are hashed by
SeedSequence itself; string ids are folded to integers first.
"""

import numpy as np


def _fold(token):
    if isinstance(token, str):
        # stable 64-bit fold of the utf-8 bytes (FNV-1a)
        h = np.uint64(14695981039346656037)
        for b in token.encode():
            h = np.uint64((int(h) ^ b) * 1099511628211 % (1 << 64))
        return int(h)
    return int(token)


def substream(root_seed, *ids):
    """Return a Generator for the substream identified by ``ids``."""
    entropy = [_fold(root_seed)] + [_fold(i) for i in ids]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def kernel_seed(root_seed, *ids):
    """A nonzero uint64 seed for the compiled lattice kernel's xorshift state."""
    g = substream(root_seed, *ids)
    s = int(g.integers(1, 2**64, dtype=np.uint64))
    return np.uint64(s)
