"""Uniform random-walk corpus generation, one walk matrix per snapshot."""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .seeding import derived_seeds


@dataclass(frozen=True)
class WalkSet:
    """Walks of one snapshot.

    `walks` is an (n_walks, L) int matrix; positions after a truncated walk
    hold -1. Row order is canonical: by root ID, then walk index.
    """

    timestep: int
    walks: np.ndarray
    rng_seed: int

    def __len__(self):
        return self.walks.shape[0]

    @property
    def roots(self):
        return self.walks[:, 0]

    def lengths(self):
        return (self.walks >= 0).sum(axis=1)

    def iter_walks(self):
        for row in self.walks:
            yield row[row >= 0]


@numba.njit(parallel=True, cache=True)
def _walk_kernel(indptr, indices, roots, seeds, r, length, out):
    for j in numba.prange(roots.shape[0]):
        np.random.seed(seeds[j])
        root = roots[j]
        for k in range(r):
            row = j * r + k
            cur = root
            out[row, 0] = cur
            for step in range(1, length):
                lo = indptr[cur]
                deg = indptr[cur + 1] - lo
                if deg == 0:
                    break
                cur = indices[lo + np.random.randint(0, deg)]
                out[row, step] = cur


def walk_snapshot(snapshot, r, length, seed) -> WalkSet:
    """`r` walks of `length` nodes from every non-isolated node of `snapshot`.

    Next steps are uniform over distinct neighbours; edge weights are
    ignored. Each root draws from its own derived seed.
    """
    if r < 1:
        raise ValueError(f"walks per node must be >= 1, got {r}")
    if length < 2:
        raise ValueError(f"walk length must be >= 2, got {length}")
    adj = snapshot.adjacency
    indptr = adj.indptr.astype(np.int64)
    indices = adj.indices.astype(np.int64)
    roots = np.flatnonzero(np.diff(indptr) > 0).astype(np.int64)
    seeds = derived_seeds(seed, snapshot.index, count=adj.shape[0])[roots]
    out = np.full((len(roots) * r, length), -1, dtype=np.int64)
    if len(roots):
        _walk_kernel(indptr, indices, roots, seeds, r, length, out)
    return WalkSet(timestep=snapshot.index, walks=out, rng_seed=int(seed))


def random_walks(network, r, length, seed) -> list:
    """One :class:`WalkSet` per snapshot of `network`."""
    return [walk_snapshot(s, r, length, seed) for s in network.snapshots]
