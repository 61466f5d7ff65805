"""Synthetic dynamic networks with planted communities and evolving nodes.

Timestep 1 is a configuration-model graph with power-law degrees and
mostly intra-community edges. Each later timestep perturbs the previous
one: planted evolving nodes migrate from their community to a fixed target
community by 3-5 edge changes per step, while stable nodes change at most
two incident edges and only within their own community.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .temporal_graph import build_by_time, stream_from_edges

logger = logging.getLogger(__name__)

MAX_MATCH_ROUNDS = 20
STABLE_LIMIT = 2


@dataclass
class SynthConfig:
    N: int = 500
    alpha_pl: float = 2.0
    C: float = 100.0
    num_communities: int = 4
    evolving_fraction: float = 0.10
    T: int = 10
    intra_ratio: float = 0.8
    stable_rewire_prob: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not self.alpha_pl > 1:
            raise ConfigError(f"power-law exponent must exceed 1, got {self.alpha_pl}")
        if not self.C > 0:
            raise ConfigError(f"scale constant must be positive, got {self.C}")
        if self.N < self.num_communities or self.num_communities < 2:
            raise ConfigError("need at least two communities and N >= num_communities")
        if not 0 < self.evolving_fraction < 1:
            raise ConfigError("evolving fraction must lie in (0, 1)")
        if not 0.5 < self.intra_ratio <= 1:
            raise ConfigError("intra ratio must lie in (0.5, 1]")
        if self.T < 2:
            raise ConfigError("need at least two timesteps")
        if not 0 <= self.stable_rewire_prob <= 1:
            raise ConfigError("stable rewire probability must lie in [0, 1]")

    @property
    def k_max(self):
        return max(1, min(self.N - 1, math.ceil(self.C ** (1.0 / self.alpha_pl))))

    def degree_pmf(self):
        k = np.arange(1, self.k_max + 1, dtype=np.float64)
        w = self.C * k ** -self.alpha_pl
        return k.astype(np.int64), w / w.sum()


@dataclass
class SynthNetwork:
    config: SynthConfig
    network: object
    stream: object
    evolving_nodes: np.ndarray
    community_of: np.ndarray
    home: np.ndarray
    target: dict
    schedule: dict
    edges: list = field(repr=False)
    regenerations: int = 0

    def is_evolving(self):
        mask = np.zeros(self.config.N, dtype=bool)
        mask[self.evolving_nodes] = True
        return mask


def sample_degrees(config: SynthConfig, rng) -> np.ndarray:
    """N draws from P(k) proportional to C * k**-alpha on [1, k_max], sum made even."""
    k, p = config.degree_pmf()
    deg = rng.choice(k, size=config.N, p=p)
    if deg.sum() % 2:
        room = np.flatnonzero(deg < config.k_max)
        i = rng.choice(room) if len(room) else rng.integers(config.N)
        if deg[i] < config.k_max:
            deg[i] += 1
        else:
            deg[i] -= 1
    return deg


def _match(stubs, accept, rng, adj):
    """Pair stubs uniformly, re-pairing rejected ones. Returns unmatched count."""
    pool = np.asarray(stubs, dtype=np.int64)
    for _ in range(MAX_MATCH_ROUNDS):
        if len(pool) < 2:
            break
        pool = rng.permutation(pool)
        if len(pool) % 2:
            keep, pool = pool[-1:], pool[:-1]
        else:
            keep = pool[:0]
        rejected = [keep]
        for u, v in pool.reshape(-1, 2):
            if u != v and v not in adj[u] and accept(u, v):
                adj[u].add(v)
                adj[v].add(u)
            else:
                rejected.append(np.array([u, v]))
        pool = np.concatenate(rejected)
    return len(pool)


def _wire_initial(config, rng, home, evolving_mask):
    deg = sample_degrees(config, rng)
    adj = [set() for _ in range(config.N)]
    k_in = rng.binomial(deg, config.intra_ratio)
    unmatched = 0

    def not_both_evolving(u, v):
        return not (evolving_mask[u] and evolving_mask[v])

    for c in range(config.num_communities):
        members = np.flatnonzero(home == c)
        stubs = np.repeat(members, k_in[members])
        unmatched += _match(stubs, not_both_evolving, rng, adj)

    stubs = np.repeat(np.arange(config.N), deg - k_in)
    unmatched += _match(stubs, lambda u, v: home[u] != home[v] and not_both_evolving(u, v), rng, adj)
    for u in np.flatnonzero(evolving_mask):
        if not adj[u]:
            peers = np.flatnonzero((home == home[u]) & ~evolving_mask)
            v = int(rng.choice(peers))
            adj[u].add(v)
            adj[v].add(int(u))
    return adj, deg, unmatched


def _options(c, prefer_more_deletions):
    """(additions, deletions) splits of c changes with |a - d| <= 1."""
    if c % 2 == 0:
        return [(c // 2, c // 2)]
    lo, hi = c // 2, c // 2 + 1
    return [(lo, hi), (hi, lo)] if prefer_more_deletions else [(hi, lo), (lo, hi)]


def _evolve_step(adj, rng, config, home, evolving, target, churn, base_degree, steps_left, log):
    comm_nodes = [set(np.flatnonzero(home == c)) for c in range(config.num_communities)]
    evolving_set = set(evolving.tolist())

    # deletions for every evolving node first, so additions cannot use up
    # the partner budget a deletion needs
    plans = []
    for e in rng.permutation(evolving):
        e = int(e)
        tgt = target[e]
        nbrs = adj[e]
        non_target = sorted(v for v in nbrs if home[v] != tgt)
        if non_target:
            c = int(rng.integers(3, 6))
            need = math.ceil(len(non_target) / steps_left)
            splits = _options(c, prefer_more_deletions=len(nbrs) >= base_degree[e])
            a, d = max(splits, key=lambda s: s[1]) if need > splits[0][1] else splits[0]
            pools = [non_target, sorted(v for v in nbrs if home[v] == tgt)]
        else:
            # migration finished: swap target-community edges one for one
            a, d = 2, 2
            pools = [sorted(nbrs)]
        removed = []
        for k, pool in enumerate(pools):
            if k:
                # every non-target partner is saturated: trade one target
                # edge for two new ones so the target count still grows
                a, d = 2, 1
            for v in rng.permutation(np.array(pool, dtype=np.int64)):
                if len(removed) == d:
                    break
                if churn[v] < STABLE_LIMIT:
                    removed.append(int(v))
            if removed:
                break
        for v in removed:
            adj[e].discard(v)
            adj[v].discard(e)
            churn[v] += 1
        d = len(removed)
        a = min(max(a, d - 1, 3 - d), d + 1) if d else 3
        plans.append((e, tgt, a, removed))

    for e, tgt, a, removed in plans:
        d = len(removed)
        blocked = adj[e] | evolving_set | set(removed)
        free = [v for v in comm_nodes[tgt] - blocked if churn[v] < STABLE_LIMIT]
        added = [int(v) for v in rng.permutation(np.array(sorted(free), dtype=np.int64))[:a]]
        for v in added:
            adj[e].add(v)
            adj[v].add(e)
            churn[v] += 1
        churn[e] += d + len(added)
        log[e].append((len(added), d))

    for s in rng.permutation(config.N):
        s = int(s)
        if s in evolving_set or churn[s] != 0 or rng.random() >= config.stable_rewire_prob:
            continue
        own = comm_nodes[home[s]]
        drop = [v for v in sorted(adj[s]) if v in own and v not in evolving_set and churn[v] < STABLE_LIMIT]
        add = [v for v in sorted(own - adj[s] - evolving_set) if v != s and churn[v] < STABLE_LIMIT]
        if not drop or not add:
            continue
        u = drop[int(rng.integers(len(drop)))]
        v = add[int(rng.integers(len(add)))]
        if u == v:
            continue
        adj[s].discard(u)
        adj[u].discard(s)
        adj[s].add(v)
        adj[v].add(s)
        churn[s] += 2
        churn[u] += 1
        churn[v] += 1


def _edge_array(adj):
    rows = [(u, v) for u in range(len(adj)) for v in adj[u] if u < v]
    return np.array(sorted(rows), dtype=np.int64).reshape(-1, 2)


def generate(config: SynthConfig) -> SynthNetwork:
    """Generate a labelled synthetic dynamic network."""
    regenerations = 0
    root = np.random.SeedSequence(config.seed)
    while True:
        rng = np.random.default_rng(root.spawn(1)[0] if regenerations else root)
        N = config.N
        home = rng.permutation(N) % config.num_communities
        n_evolving = int(round(N * config.evolving_fraction))
        evolving = np.sort(rng.choice(N, size=n_evolving, replace=False))
        evolving_mask = np.zeros(N, dtype=bool)
        evolving_mask[evolving] = True
        target = {}
        for e in evolving:
            others = [c for c in range(config.num_communities) if c != home[e]]
            target[int(e)] = int(rng.choice(others))
        adj, deg, unmatched = _wire_initial(config, rng, home, evolving_mask)
        if unmatched <= max(0.05 * deg.sum(), 2 * config.k_max):
            break
        regenerations += 1
        logger.warning("stub matching left %d stubs unmatched; regenerating", unmatched)
        if regenerations > MAX_MATCH_ROUNDS:
            raise ConfigError("could not wire a graph for this configuration")

    base_degree = np.array([len(a) for a in adj])
    log = {int(e): [] for e in evolving}
    steps = [_edge_array(adj)]
    for t in range(2, config.T + 1):
        churn = np.zeros(N, dtype=np.int64)
        _evolve_step(adj, rng, config, home, evolving, target, churn, base_degree,
                     config.T - t + 1, log)
        steps.append(_edge_array(adj))

    community = np.tile(home, (config.T, 1))
    for e in evolving:
        e = int(e)
        for t, E in enumerate(steps):
            nb = np.concatenate([E[E[:, 0] == e, 1], E[E[:, 1] == e, 0]])
            if len(nb) and np.sum(home[nb] == target[e]) > len(nb) / 2:
                community[t, e] = target[e]

    rows = [(u, v, float(t + 1)) for t, E in enumerate(steps) for u, v in E]
    stream = stream_from_edges(rows, labels=np.arange(N))
    network = build_by_time(stream, 1.0, 1.0)
    schedule = {e: {"source": int(home[e]), "target": target[e], "changes": log[e]} for e in log}
    return SynthNetwork(config=config, network=network, stream=stream, evolving_nodes=evolving,
                        community_of=community, home=home, target=target, schedule=schedule,
                        edges=steps, regenerations=regenerations)


def manifest(synth: SynthNetwork):
    return {
        "config": asdict(synth.config),
        "T": synth.config.T,
        "evolving": int(len(synth.evolving_nodes)),
        "temporal_edges": int(sum(len(E) for E in synth.edges)),
        "edges_per_timestep": [int(len(E)) for E in synth.edges],
        "regenerations": synth.regenerations,
    }
