"""Dynamic Bernoulli embeddings over random-walk corpora.

Every timestep t owns an embedding matrix M_t; a single context matrix
``alpha`` is shared by all timesteps, which keeps every M_t in one vector
space. Training maximises

    L = L_pos + L_neg + L_alpha + L_y

where the data terms are Bernoulli log-likelihoods of each walk position
given the summed context vectors of its window, L_alpha is a Gaussian
prior on ``alpha`` and L_y a Gaussian prior on M_1 plus a random-walk
drift prior tying M_t to M_{t-1}.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .errors import ConfigError, NumericalError, ShapeError
from .seeding import derived_seeds

logger = logging.getLogger(__name__)

ETA_CLAMP = 30.0


@dataclass
class TrainConfig:
    dim: int = 128
    context: int = 4
    negatives: int = 10
    lambda1: float = None
    lam: float = 1000.0
    lr: float = 0.025
    lr_min: float = 1e-4
    epochs: int = 5
    seed: int = 0
    init: str = "gaussian-prior"
    workers: int = 1

    def __post_init__(self):
        if self.lambda1 is None:
            self.lambda1 = float(self.dim)
        self.validate()

    def validate(self):
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        if self.context < 2 or self.context % 2:
            raise ConfigError(f"context size must be even and >= 2, got {self.context}")
        if self.negatives < 1:
            raise ConfigError(f"negatives must be >= 1, got {self.negatives}")
        if not (self.lambda1 > 0 and self.lam > 0):
            raise ConfigError("prior precisions lambda1 and lambda must be positive")
        if not (self.lr > 0 and self.lr_min > 0):
            raise ConfigError("learning rates must be positive")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.init not in ("gaussian-prior", "pretrained"):
            raise ConfigError(f"unknown init {self.init!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def to_dict(self):
        return asdict(self)


@dataclass
class EmbeddingSet:
    """Per-timestep embeddings ``M[t]`` (T, V, D) and shared context ``alpha`` (V, D).

    Row i of every matrix belongs to dense node i; ``labels[i]`` is its
    original identifier. ``present[t]`` marks nodes that occur in snapshot t.
    """

    M: np.ndarray
    alpha: np.ndarray
    labels: np.ndarray
    present: np.ndarray = None
    objective: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.M.ndim != 3 or self.alpha.ndim != 2:
            raise ShapeError("M must be (T, V, D) and alpha (V, D)")
        if self.M.shape[1:] != self.alpha.shape:
            raise ShapeError(f"M rows {self.M.shape[1:]} do not match alpha {self.alpha.shape}")
        if self.present is None:
            self.present = np.ones(self.M.shape[:2], dtype=bool)

    @property
    def T(self):
        return self.M.shape[0]

    @property
    def D(self):
        return self.M.shape[2]

    @property
    def vocab_size(self):
        return self.M.shape[1]

    def index_of(self, labels):
        lookup = {int(l): i for i, l in enumerate(self.labels)}
        missing = [l for l in labels if int(l) not in lookup]
        if missing:
            raise KeyError(f"unknown node id(s): {', '.join(map(str, missing))}")
        return np.array([lookup[int(l)] for l in labels], dtype=np.int64)


def init_embeddings(vocab_size, T, config: TrainConfig, pretrained=None):
    """Draw ``alpha`` and M_1..M_T from the Gaussian priors.

    alpha, M_1 ~ N(0, 1/lambda1); M_t ~ N(M_{t-1}, 1/lambda). With
    ``config.init == "pretrained"``, `pretrained` supplies a dict with
    ``"M"`` of shape (T, V, D) or (V, D) (broadcast over time) and an
    optional ``"alpha"`` (V, D); missing parts are drawn from the priors.
    """
    if vocab_size < 1 or T < 1:
        raise ConfigError("vocab_size and T must be >= 1")
    rng = np.random.default_rng(config.seed)
    D = config.dim
    alpha = rng.normal(0.0, config.lambda1 ** -0.5, size=(vocab_size, D))
    M = np.empty((T, vocab_size, D))
    M[0] = rng.normal(0.0, config.lambda1 ** -0.5, size=(vocab_size, D))
    step = config.lam ** -0.5
    for t in range(1, T):
        M[t] = M[t - 1] + rng.normal(0.0, step, size=(vocab_size, D))

    if config.init == "pretrained":
        if pretrained is None:
            raise ConfigError("init='pretrained' requires pretrained matrices")
        pm = np.asarray(pretrained["M"], dtype=np.float64)
        if pm.shape == (vocab_size, D):
            M[:] = pm
        elif pm.shape == (T, vocab_size, D):
            M[:] = pm
        else:
            raise ShapeError(f"pretrained M has shape {pm.shape}, expected "
                             f"{(T, vocab_size, D)} or {(vocab_size, D)}")
        if pretrained.get("alpha") is not None:
            pa = np.asarray(pretrained["alpha"], dtype=np.float64)
            if pa.shape != (vocab_size, D):
                raise ShapeError(f"pretrained alpha has shape {pa.shape}, expected {(vocab_size, D)}")
            alpha[:] = pa
    return M, alpha


def context_sum(alpha, context_nodes):
    """Sum of the alpha rows selected by `context_nodes` (-1 entries ignored)."""
    nodes = np.asarray(context_nodes)
    nodes = nodes[nodes >= 0]
    return alpha[nodes].sum(axis=0)


def eta(y_row, ctx):
    """Natural parameter of the Bernoulli at one position: y . context_sum."""
    return float(np.dot(y_row, ctx))


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


class NegativeSampler:
    """Unigram^0.75 distribution over the vocabulary, from walk-corpus counts."""

    power = 0.75

    def __init__(self, counts):
        counts = np.asarray(counts, dtype=np.float64)
        weights = counts ** self.power
        total = weights.sum()
        if total <= 0:
            raise ValueError("negative sampler needs at least one node with nonzero count")
        self.counts = counts
        self.probs = weights / total

    @classmethod
    def from_walks(cls, walksets, vocab_size):
        counts = np.zeros(vocab_size, dtype=np.int64)
        for ws in walksets:
            w = ws.walks[ws.walks >= 0]
            counts += np.bincount(w, minlength=vocab_size)
        return cls(counts)

    def table(self, nodes=None):
        """Candidate nodes and their cumulative probabilities, restricted to `nodes`."""
        cand = np.arange(len(self.probs)) if nodes is None else np.asarray(nodes, dtype=np.int64)
        cand = cand[self.probs[cand] > 0]
        p = self.probs[cand]
        cum = np.cumsum(p / p.sum()) if len(cand) else np.zeros(0)
        if len(cum):
            cum[-1] = 1.0
        return cand.astype(np.int64), cum

    def sample(self, rng, size, nodes=None, exclude=None):
        cand, cum = self.table(nodes)
        out = cand[np.minimum(np.searchsorted(cum, rng.random(size), side="right"), len(cand) - 1)]
        if exclude is not None and len(cand) > 1:
            bad = out == exclude
            while bad.any():
                redraw = rng.random(int(bad.sum()))
                out[bad] = cand[np.minimum(np.searchsorted(cum, redraw, side="right"), len(cand) - 1)]
                bad = out == exclude
        return out


@dataclass
class Batch:
    """Explicit training positions: 1-based timestep, center node, context
    window (padded with -1) and the negatives drawn for that position."""

    timestep: np.ndarray
    center: np.ndarray
    context: np.ndarray
    negatives: np.ndarray


def windows(walk, cs):
    """Yield ``(center, context)`` for every position, truncating at the ends."""
    walk = np.asarray(walk)
    walk = walk[walk >= 0]
    h = cs // 2
    for i in range(len(walk)):
        ctx = np.concatenate([walk[max(0, i - h):i], walk[i + 1:i + 1 + h]])
        if len(ctx):
            yield walk[i], ctx


def batch_from_walks(walkset, cs, sampler, ns, rng, nodes=None):
    rows = []
    for walk in walkset.iter_walks():
        for center, ctx in windows(walk, cs):
            rows.append((center, ctx))
    context = np.full((len(rows), cs), -1, dtype=np.int64)
    for k, (_, ctx) in enumerate(rows):
        context[k, :len(ctx)] = ctx
    center = np.array([c for c, _ in rows], dtype=np.int64)
    negs = np.stack([sampler.sample(rng, ns, nodes=nodes, exclude=c) for c in center]) \
        if len(rows) else np.zeros((0, ns), dtype=np.int64)
    return Batch(np.full(len(rows), walkset.timestep), center, context, negs)


def data_terms(M, alpha, batch):
    """Return (L_pos, L_neg) for an explicit batch."""
    l_pos = 0.0
    l_neg = 0.0
    for t, g, ctx_nodes, negs in zip(batch.timestep, batch.center, batch.context, batch.negatives):
        ctx = context_sum(alpha, ctx_nodes)
        Y = M[t - 1]
        l_pos += _log_sigmoid(np.clip(eta(Y[g], ctx), -ETA_CLAMP, ETA_CLAMP))
        for n in negs:
            l_neg += _log_sigmoid(-np.clip(eta(Y[n], ctx), -ETA_CLAMP, ETA_CLAMP))
    return float(l_pos), float(l_neg)


def prior_terms(M, alpha, lambda1, lam):
    """Return (L_alpha, L_y)."""
    l_alpha = -0.5 * lambda1 * float(np.sum(alpha ** 2))
    l_y = -0.5 * lambda1 * float(np.sum(M[0] ** 2))
    if M.shape[0] > 1:
        l_y -= 0.5 * lam * float(np.sum(np.diff(M, axis=0) ** 2))
    return l_alpha, l_y


def loss(embeddings, batch, config: TrainConfig):
    """Objective L(y, alpha) on `batch` plus the full priors. Training maximises it."""
    M, alpha = _arrays(embeddings)
    l_pos, l_neg = data_terms(M, alpha, batch)
    l_alpha, l_y = prior_terms(M, alpha, config.lambda1, config.lam)
    return l_pos + l_neg + l_alpha + l_y


def gradient(embeddings, batch, config: TrainConfig, priors=True):
    """Analytic gradient of :func:`loss` with respect to (M, alpha)."""
    M, alpha = _arrays(embeddings)
    gM = np.zeros_like(M)
    ga = np.zeros_like(alpha)
    for t, g, ctx_nodes, negs in zip(batch.timestep, batch.center, batch.context, batch.negatives):
        ctx_nodes = ctx_nodes[ctx_nodes >= 0]
        ctx = alpha[ctx_nodes].sum(axis=0)
        Y = M[t - 1]
        targets = np.concatenate([[g], negs])
        labels = np.zeros(len(targets))
        labels[0] = 1.0
        e = np.clip(Y[targets] @ ctx, -ETA_CLAMP, ETA_CLAMP)
        coef = labels - 1.0 / (1.0 + np.exp(-e))
        np.add.at(gM[t - 1], targets, coef[:, None] * ctx[None, :])
        gctx = coef @ Y[targets]
        np.add.at(ga, ctx_nodes, gctx[None, :])
    if priors:
        ga -= config.lambda1 * alpha
        gM[0] -= config.lambda1 * M[0]
        if M.shape[0] > 1:
            d = np.diff(M, axis=0)
            gM[1:] -= config.lam * d
            gM[:-1] += config.lam * d
    return gM, ga


def _arrays(embeddings):
    if isinstance(embeddings, EmbeddingSet):
        return embeddings.M, embeddings.alpha
    return embeddings


@numba.njit(parallel=True, fastmath=True, cache=True)
def _sgd_pass(Y, alpha, walks, order, seeds, cand, cum, half, ns, lr_a, lr_b):
    """One pass over the walks of one timestep. Returns summed data log-likelihood."""
    n = order.shape[0]
    D = Y.shape[1]
    L = walks.shape[1]
    ncand = cand.shape[0]
    total = 0.0
    for j in numba.prange(n):
        np.random.seed(seeds[j])
        w = walks[order[j]]
        lr = lr_a + (lr_b - lr_a) * j / n
        length = 0
        while length < L and w[length] >= 0:
            length += 1
        ctx = np.empty(D)
        gctx = np.empty(D)
        targets = np.empty(ns + 1, dtype=np.int64)
        coefs = np.empty(ns + 1)
        ll = 0.0
        for i in range(length):
            g = w[i]
            lo = max(0, i - half)
            hi = min(length, i + half + 1)
            if hi - lo < 2:
                continue
            for d in range(D):
                ctx[d] = 0.0
            for k in range(lo, hi):
                if k != i:
                    arow = alpha[w[k]]
                    for d in range(D):
                        ctx[d] += arow[d]
            targets[0] = g
            m = 1
            if ncand > 1:
                for s in range(ns):
                    neg = g
                    for _ in range(16):
                        idx = np.searchsorted(cum, np.random.random(), side="right")
                        if idx >= ncand:
                            idx = ncand - 1
                        neg = cand[idx]
                        if neg != g:
                            break
                    if neg != g:
                        targets[m] = neg
                        m += 1
            for d in range(D):
                gctx[d] = 0.0
            for q in range(m):
                row = Y[targets[q]]
                e = 0.0
                for d in range(D):
                    e += row[d] * ctx[d]
                if e > 30.0:
                    e = 30.0
                elif e < -30.0:
                    e = -30.0
                sig = 1.0 / (1.0 + np.exp(-e))
                if q == 0:
                    coefs[q] = 1.0 - sig
                    ll -= np.log1p(np.exp(-e))
                else:
                    coefs[q] = -sig
                    ll -= np.log1p(np.exp(e))
                c = coefs[q]
                for d in range(D):
                    gctx[d] += c * row[d]
            for q in range(m):
                row = Y[targets[q]]
                c = lr * coefs[q]
                for d in range(D):
                    row[d] += c * ctx[d]
            for k in range(lo, hi):
                if k != i:
                    arow = alpha[w[k]]
                    for d in range(D):
                        arow[d] += lr * gctx[d]
        total += ll
    return total


def prior_step(M, alpha, lr, lambda1, lam):
    """Proximal (implicit) gradient step on the Gaussian priors, in place.

    Solves (I + lr * P) x_new = x_old, where P is the precision of the
    prior, so arbitrarily large lr * lambda stays stable. For small steps it
    agrees with the explicit step x + lr * grad(prior).
    """
    alpha /= 1.0 + lr * lambda1
    T = M.shape[0]
    if T == 1:
        M /= 1.0 + lr * lambda1
        return
    P = np.zeros((T, T))
    P[0, 0] = lambda1
    for t in range(1, T):
        P[t, t] += lam
        P[t - 1, t - 1] += lam
        P[t, t - 1] -= lam
        P[t - 1, t] -= lam
    A = np.eye(T) + lr * P
    flat = M.reshape(T, -1)
    flat[:] = np.linalg.solve(A, flat)


def _set_workers(workers):
    try:
        numba.set_num_threads(min(workers, numba.config.NUMBA_NUM_THREADS))
    except ValueError:
        pass


def train(network, walks, config: TrainConfig, pretrained=None, callback=None) -> EmbeddingSet:
    """Fit dynamic Bernoulli embeddings to the walk corpora of `network`.

    Within an epoch timesteps are visited in order 1..T; each walk position
    updates its center row of M_t, the rows of its negatives, and the
    alpha rows of its window. The prior is applied once per epoch as a
    proximal step. The learning rate decays linearly from ``lr`` to
    ``lr_min`` over the whole run.
    """
    config.validate()
    T = network.T
    if len(walks) != T:
        raise ConfigError(f"got {len(walks)} walk sets for {T} snapshots")
    V = network.num_nodes
    M, alpha = init_embeddings(V, T, config, pretrained)
    present = np.zeros((T, V), dtype=bool)
    for k, snap in enumerate(network.snapshots):
        present[k, snap.nodes] = True

    sampler = NegativeSampler.from_walks(walks, V)
    tables = [sampler.table(np.flatnonzero(np.diff(s.adjacency.indptr) > 0)) for s in network.snapshots]
    sizes = [len(ws) for ws in walks]
    total_walks = max(1, sum(sizes) * config.epochs)
    rng = np.random.default_rng(derived_seeds(config.seed, 0x5EED, count=1)[0])
    _set_workers(config.workers)

    half = config.context // 2
    done = 0
    trace = []
    lr_span = config.lr - config.lr_min

    def lr_at(k):
        return config.lr - lr_span * min(1.0, k / total_walks)

    for epoch in range(config.epochs):
        ll = 0.0
        epoch_start = done
        for k, ws in enumerate(walks):
            n = sizes[k]
            if n == 0:
                continue
            order = rng.permutation(n).astype(np.int64)
            seeds = derived_seeds(config.seed, epoch, k, count=n)
            cand, cum = tables[k]
            ll += _sgd_pass(M[k], alpha, ws.walks, order, seeds, cand, cum, half,
                            config.negatives, lr_at(done), lr_at(done + n))
            done += n
            if not (np.isfinite(M[k]).all() and np.isfinite(alpha).all()):
                bad = np.flatnonzero(~np.isfinite(M[k]).all(axis=1))
                row = int(bad[0]) if len(bad) else int(np.flatnonzero(~np.isfinite(alpha).all(axis=1))[0])
                raise NumericalError(epoch + 1, k + 1, row, lr_at(done))
        prior_step(M, alpha, 0.5 * (lr_at(epoch_start) + lr_at(done)), config.lambda1, config.lam)
        l_alpha, l_y = prior_terms(M, alpha, config.lambda1, config.lam)
        trace.append(ll + l_alpha + l_y)
        logger.info("epoch %d/%d objective %.6g", epoch + 1, config.epochs, trace[-1])
        if callback is not None:
            callback(epoch + 1, M, alpha)

    return EmbeddingSet(M=M, alpha=alpha, labels=network.labels, present=present,
                        objective=trace, config=config.to_dict())
