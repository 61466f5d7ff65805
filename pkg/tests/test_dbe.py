import math

import numpy as np
import pytest

from dynemb.dbe import (Batch, EmbeddingSet, NegativeSampler, TrainConfig, _sgd_pass, batch_from_walks,
                        context_sum, data_terms, eta, gradient, init_embeddings, loss, prior_step,
                        prior_terms, train)
from dynemb.errors import ConfigError, NumericalError, ShapeError
from dynemb.temporal_graph import build_by_time, stream_from_edges
from dynemb.walks import random_walks


def tiny_instance(seed=0, T=2):
    """D=4, 3 nodes, two positions per timestep with fixed negatives."""
    rng = np.random.default_rng(seed)
    M = rng.normal(0, 0.5, size=(T, 3, 4))
    alpha = rng.normal(0, 0.5, size=(3, 4))
    batch = Batch(
        timestep=np.array([1, 1, T]),
        center=np.array([0, 1, 2]),
        context=np.array([[1, 2], [0, -1], [0, 1]]),
        negatives=np.array([[2, 1], [2, 0], [1, 1]]),
    )
    return M, alpha, batch


def finite_difference(f, x, h=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


@pytest.mark.parametrize("T", [1, 2, 3])
def test_gradient_matches_finite_differences(T):
    M, alpha, batch = tiny_instance(T=T)
    cfg = TrainConfig(dim=4, lambda1=1.3, lam=2.5)
    gM, ga = gradient((M, alpha), batch, cfg)
    f = lambda: loss((M, alpha), batch, cfg)
    nM = finite_difference(f, M)
    na = finite_difference(f, alpha)
    for analytic, numeric in ((gM, nM), (ga, na)):
        rel = np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(numeric))
        assert rel.max() < 1e-4


def test_eta_examples():
    assert eta(np.zeros(3), np.ones(3)) == 0.0
    e1 = np.array([1.0, 0, 0])
    assert eta(e1, e1) == 1.0
    alpha = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert eta(np.array([3.0, 1.0]), context_sum(alpha, [0, 1])) == 5.0


def test_loss_all_zero():
    M = np.zeros((1, 2, 3))
    alpha = np.zeros((2, 3))
    batch = Batch(np.array([1]), np.array([0]), np.array([[1, -1]]), np.array([[1]]))
    cfg = TrainConfig(dim=3)
    assert loss((M, alpha), batch, cfg) == pytest.approx(2 * math.log(0.5))
    assert loss((M, alpha), batch, cfg) == pytest.approx(-1.3863, abs=1e-4)


def test_drift_prior_value():
    M = np.array([[[1.0, 0.0]], [[1.0, 2.0]]])
    l_alpha, l_y = prior_terms(M, np.zeros((1, 2)), lambda1=1.0, lam=2.0)
    assert l_y - (-0.5 * 1.0 * 1.0) == pytest.approx(-4.0)


def test_alpha_prior_decreases_with_norm():
    vals = [prior_terms(np.zeros((1, 1, 2)), np.array([[s, 0.0]]), 1.0, 1.0)[0] for s in (0, 1, 2, 3)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_eta_clamp_keeps_loss_finite():
    M = np.full((1, 2, 2), 100.0)
    alpha = np.full((2, 2), 100.0)
    batch = Batch(np.array([1]), np.array([0]), np.array([[1]]), np.array([[1]]))
    lp, ln = data_terms(M, alpha, batch)
    assert np.isfinite(lp) and np.isfinite(ln)
    assert ln == pytest.approx(-np.logaddexp(0, 30.0))


def test_init_prior_variance():
    M, alpha = init_embeddings(800, 1, TrainConfig(dim=128, lambda1=1.0, seed=3))
    assert M[0].size >= 10**5
    assert M[0].var() == pytest.approx(1.0, abs=0.05)
    assert alpha.var() == pytest.approx(1.0, abs=0.05)
    M, _ = init_embeddings(100, 1, TrainConfig(dim=16, lambda1=1e8, seed=3))
    assert M.var() < 1e-7


def test_init_drift_variance():
    M, _ = init_embeddings(800, 3, TrainConfig(dim=128, lam=1e6, seed=1))
    d = M[2] - M[0]
    assert np.abs(d).max() < 0.01
    assert d.var() == pytest.approx(2e-6, rel=0.05)


def test_init_deterministic():
    a = init_embeddings(5, 2, TrainConfig(dim=4, seed=9))
    b = init_embeddings(5, 2, TrainConfig(dim=4, seed=9))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_default_lambda1_tracks_dimension():
    assert TrainConfig().lambda1 == 128.0
    assert TrainConfig(dim=8).lambda1 == 8.0
    assert TrainConfig(dim=8, lambda1=1.0).lambda1 == 1.0


def test_pretrained_init():
    cfg = TrainConfig(dim=3, init="pretrained")
    static = np.arange(15.0).reshape(5, 3)
    M, alpha = init_embeddings(5, 2, cfg, pretrained={"M": static})
    assert np.array_equal(M[0], static) and np.array_equal(M[1], static)
    with pytest.raises(ShapeError):
        init_embeddings(5, 2, cfg, pretrained={"M": np.zeros((4, 3))})
    with pytest.raises(ShapeError):
        init_embeddings(5, 2, cfg, pretrained={"M": static, "alpha": np.zeros((5, 2))})


@pytest.mark.parametrize("kw", [dict(dim=0), dict(context=3), dict(context=0), dict(negatives=0),
                                dict(lambda1=0), dict(lam=-1), dict(lr=0), dict(epochs=0),
                                dict(init="zeros")])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)


def test_negative_sampler():
    s = NegativeSampler([16, 0, 1, 81])
    assert s.probs.sum() == pytest.approx(1.0)
    assert s.probs[1] == 0
    expected = np.array([8, 0, 1, 27]) / 36
    assert np.allclose(s.probs, expected)
    rng = np.random.default_rng(0)
    draws = s.sample(rng, 200_000)
    freq = np.bincount(draws, minlength=4) / len(draws)
    assert np.allclose(freq, expected, atol=0.005)
    restricted = s.sample(rng, 1000, nodes=[0, 1, 2], exclude=0)
    assert set(restricted.tolist()) == {2}


def test_kernel_matches_sequential_gradient_steps():
    """One kernel pass equals per-position gradient ascent on the data terms."""
    rng = np.random.default_rng(1)
    M = rng.normal(0, 0.3, size=(1, 3, 5))
    alpha = rng.normal(0, 0.3, size=(3, 5))
    walk = np.array([[0, 1, 0, 1]], dtype=np.int64)
    lr, ns = 0.1, 2
    ref_M, ref_a = M.copy(), alpha.copy()
    for i in range(4):
        g = int(walk[0, i])
        ctx = [int(walk[0, k]) for k in (i - 1, i + 1) if 0 <= k < 4]
        batch = Batch(np.array([1]), np.array([g]), np.array([ctx + [-1] * (2 - len(ctx))]),
                      np.array([[1 - g] * ns]))
        gM, ga = gradient((ref_M, ref_a), batch, TrainConfig(dim=5), priors=False)
        ref_M += lr * gM
        ref_a += lr * ga
    Y = M[0].copy()
    a = alpha.copy()
    _sgd_pass(Y, a, walk, np.array([0]), np.array([7], dtype=np.uint32),
              np.array([0, 1]), np.array([0.5, 1.0]), 1, ns, lr, lr)
    assert np.allclose(Y, ref_M[0], atol=1e-12)
    assert np.allclose(a, ref_a, atol=1e-12)


def test_prior_step_first_order_agrees_with_gradient():
    rng = np.random.default_rng(2)
    M = rng.normal(size=(4, 3, 2))
    alpha = rng.normal(size=(3, 2))
    cfg = TrainConfig(dim=2, lambda1=2.0, lam=5.0)
    empty = Batch(np.zeros(0, int), np.zeros(0, int), np.zeros((0, 2), int), np.zeros((0, 1), int))
    gM, ga = gradient((M, alpha), empty, cfg)
    lr = 1e-6
    M2, a2 = M.copy(), alpha.copy()
    prior_step(M2, a2, lr, cfg.lambda1, cfg.lam)
    assert np.allclose((M2 - M) / lr, gM, rtol=1e-4, atol=1e-4)
    assert np.allclose((a2 - alpha) / lr, ga, rtol=1e-4, atol=1e-4)


def test_prior_step_stable_for_large_steps():
    M = np.random.default_rng(0).normal(size=(5, 10, 3))
    alpha = np.ones((10, 3))
    prior_step(M, alpha, 25.0, 1.0, 1000.0)
    assert np.isfinite(M).all()
    assert np.abs(M).max() < 3


def test_batch_from_walks_truncates_windows():
    s = stream_from_edges([(0, 1, 0), (1, 2, 0)])
    net = build_by_time(s, 1, 1)
    ws = random_walks(net, 1, 4, seed=0)[0]
    sampler = NegativeSampler.from_walks([ws], 3)
    b = batch_from_walks(ws, 4, sampler, 3, np.random.default_rng(0))
    assert len(b.center) == 12
    assert (b.context[:, 0] >= 0).all()
    assert ((b.context >= 0).sum(axis=1) >= 2).all()
    assert (b.negatives != b.center[:, None]).all()


def _clique_network(seed=0):
    from conftest import clique_edges
    return build_by_time(stream_from_edges(clique_edges([20, 20])), 1.0, 1.0)


def _intra_inter(Y):
    d = np.linalg.norm(Y[:, None] - Y[None], axis=2)
    lab = np.arange(len(Y)) // 20
    same = (lab[:, None] == lab[None]) & ~np.eye(len(Y), dtype=bool)
    return d[same].mean(), d[lab[:, None] != lab[None]].mean()


def test_planted_partition_single_seed(two_cliques):
    walks = random_walks(two_cliques, 10, 80, seed=0)
    emb = train(two_cliques, walks, TrainConfig(dim=8, seed=0))
    intra, inter = _intra_inter(emb.M[0])
    assert intra < inter
    assert np.isfinite(emb.M).all() and np.isfinite(emb.alpha).all()
    assert emb.T == 1


def test_objective_improves(two_cliques):
    walks = random_walks(two_cliques, 10, 80, seed=1)
    emb = train(two_cliques, walks, TrainConfig(dim=8, seed=1))
    assert len(emb.objective) == 5
    assert emb.objective[-1] > emb.objective[0]


def _repeated(graph_edges, T):
    return build_by_time(stream_from_edges([(u, v, float(t)) for t in range(T) for u, v in graph_edges]),
                         1.0, 1.0)


def _random_graph(n=40, p=0.15, seed=0):
    rng = np.random.default_rng(seed)
    return [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]


def test_drift_prior_controls_displacement():
    net = _repeated(_random_graph(), 2)
    walks = random_walks(net, 5, 40, seed=2)
    disp = {}
    for lam in (1e3, 1e-3):
        emb = train(net, walks, TrainConfig(dim=16, lam=lam, seed=2))
        disp[lam] = np.linalg.norm(emb.M[1] - emb.M[0], axis=1).mean()
    assert disp[1e3] < disp[1e-3]


def test_single_timestep_ignores_drift_precision():
    net = _repeated(_random_graph(seed=3), 1)
    walks = random_walks(net, 3, 20, seed=0)
    a = train(net, walks, TrainConfig(dim=8, lam=1.0, seed=0))
    b = train(net, walks, TrainConfig(dim=8, lam=1e4, seed=0))
    assert np.array_equal(a.M, b.M) and np.array_equal(a.alpha, b.alpha)


def test_training_is_bit_reproducible():
    net = _repeated(_random_graph(seed=4), 3)
    walks = random_walks(net, 3, 20, seed=0)
    a = train(net, walks, TrainConfig(dim=8, seed=5))
    b = train(net, walks, TrainConfig(dim=8, seed=5))
    assert a.M.tobytes() == b.M.tobytes()
    assert a.alpha.tobytes() == b.alpha.tobytes()
    assert a.objective == b.objective


def test_absent_rows_follow_prior_only():
    # node 5 only exists at t=1; its t=2 row is driven by the drift prior
    s = stream_from_edges([(0, 1, 0), (1, 2, 0), (4, 5, 0), (0, 1, 1), (1, 2, 1), (2, 3, 1)])
    net = build_by_time(s, 1, 1)
    emb = train(net, random_walks(net, 5, 10, seed=0), TrainConfig(dim=4, seed=0))
    assert not emb.present[1, 5] and emb.present[0, 5]
    assert np.linalg.norm(emb.M[1, 5] - emb.M[0, 5]) < np.linalg.norm(emb.M[0, 5])


def test_nan_aborts_with_diagnostics(two_cliques):
    walks = random_walks(two_cliques, 2, 20, seed=0)
    with pytest.raises(NumericalError) as exc:
        train(two_cliques, walks, TrainConfig(dim=8, lr=1e200, lr_min=1e200, lambda1=1e-6, seed=0))
    assert exc.value.epoch == 1 and exc.value.timestep == 1
    assert exc.value.row >= 0


def test_embedding_set_shapes():
    with pytest.raises(ShapeError):
        EmbeddingSet(M=np.zeros((2, 3, 4)), alpha=np.zeros((3, 5)), labels=np.arange(3))
    e = EmbeddingSet(M=np.zeros((2, 3, 4)), alpha=np.zeros((3, 4)), labels=np.array([7, 8, 9]))
    assert e.index_of([9, 7]).tolist() == [2, 0]
    with pytest.raises(KeyError):
        e.index_of([1])
