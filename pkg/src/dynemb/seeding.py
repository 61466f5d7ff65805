"""Deterministic seed derivation.

All randomness flows from one root seed. Components ask for a named
sub-stream so they can be re-run independently of each other.
"""
import zlib

import numpy as np

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def sub_seed(root, name):
    """Return a 32-bit seed for the sub-stream `name` of `root`."""
    key = zlib.crc32(name.encode("utf-8"))
    ss = np.random.SeedSequence([int(root) & 0xFFFFFFFF, key])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def splitmix64(x):
    """Vectorised splitmix64 finaliser on uint64 arrays (wraps mod 2**64)."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return z


def derived_seeds(seed, *keys, count):
    """32-bit seeds for items 0..count-1 under the key path (seed, *keys).

    Every item gets its own seed, so per-item work can run in any order
    (or in parallel) and still draw the same numbers.
    """
    h = splitmix64(np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF))
    for k in keys:
        h = splitmix64(h ^ np.uint64(int(k) & 0xFFFFFFFFFFFFFFFF))
    items = np.arange(count, dtype=np.uint64)
    out = splitmix64(splitmix64(h ^ items))
    return (out >> np.uint64(32)).astype(np.uint32)
