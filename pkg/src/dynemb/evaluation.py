"""Link prediction, evolving-node detection and ranking metrics."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata
from sklearn.model_selection import StratifiedKFold

from .errors import EvaluationError

ACTIVE_FRACTION = 0.10


@dataclass
class EvalReport:
    task: str
    metrics: dict
    folds: list = field(default_factory=list)
    seed: int = 0
    config_hash: str = ""
    details: dict = field(default_factory=dict)

    def to_json(self, **kw):
        return json.dumps({"task": self.task, "metrics": self.metrics, "folds": self.folds,
                           "seed": self.seed, "config_hash": self.config_hash}, **kw)


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# --------------------------------------------------------------------------
# ranking metrics

def average_precision(ranking, relevant):
    relevant = set(relevant)
    hits = 0
    total = 0.0
    for rank, item in enumerate(ranking, start=1):
        if item in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


def mean_reciprocal_rank(ranking, relevant):
    """Mean over relevant items of 1 / (1 + non-relevant items ranked above it).

    A lone relevant item at rank r scores 1/r; a ranking whose relevant
    items fill the top |relevant| slots scores exactly 1.
    """
    relevant = set(relevant)
    misses = 0
    total = 0.0
    for item in ranking:
        if item in relevant:
            total += 1.0 / (1 + misses)
        else:
            misses += 1
    return total / len(relevant)


def top_k(ranking, relevant, k):
    return len(set(ranking[:k]) & set(relevant)) / k


def ranking_metrics(ranking, ground_truth, k=None) -> EvalReport:
    """MAP, MRR and TOP-K of `ranking` (an ActivityRanking or a node list).

    Relevant items missing from the ranking count as never retrieved.
    """
    order = list(ranking.evolving_ranking if isinstance(ranking, ActivityRanking) else ranking)
    gt = set(int(g) for g in ground_truth)
    if not gt:
        raise EvaluationError("ground truth is empty")
    if not order:
        raise EvaluationError("ranking is empty")
    k = len(gt) if k is None else int(k)
    order = [int(x) for x in order]
    metrics = {
        "MAP": average_precision(order, gt),
        "MRR": mean_reciprocal_rank(order, gt),
        "TOPK": top_k(order, gt, k),
    }
    return EvalReport(task="evolving_detection", metrics=metrics, details={"k": k})


# --------------------------------------------------------------------------
# evolving node detection

@dataclass
class ActivityRanking:
    """Displacement-based activity of every node.

    ``per_step[t]`` ranks the nodes present at both t+1 and t+2 (1-based
    timesteps) by ||y(t+2) - y(t+1)||, largest first; ``active[t]`` holds
    its top 10%. ``evolving_ranking`` orders nodes by number of active
    timesteps, then summed displacement, then node ID.
    """

    per_step: list
    displacement: np.ndarray
    active: list
    active_counts: np.ndarray
    evolving_ranking: np.ndarray
    labels: np.ndarray

    def evolving_nodes(self, fraction=ACTIVE_FRACTION):
        n = math.ceil(fraction * len(self.evolving_ranking))
        return self.evolving_ranking[:n]

    def active_mask(self):
        T1 = len(self.active)
        mask = np.zeros((T1, self.displacement.shape[1]), dtype=bool)
        for t, a in enumerate(self.active):
            mask[t, a] = True
        return mask


def displacements(M):
    """(T-1, V) array of ||M[t+1] - M[t]||."""
    return np.linalg.norm(np.diff(M, axis=0), axis=2)


def detect_evolving(embeddings, present=None) -> ActivityRanking:
    """Rank nodes by how often their embedding moves among the top 10%."""
    M = embeddings.M
    if present is None:
        present = embeddings.present
    T, V = M.shape[:2]
    if T < 2:
        raise EvaluationError("evolving-node detection needs at least two timesteps")
    disp = displacements(M)
    both = present[:-1] & present[1:]
    disp = np.where(both, disp, np.nan)
    per_step, active = [], []
    counts = np.zeros(V, dtype=np.int64)
    summed = np.nansum(disp, axis=0)
    ids = np.arange(V)
    for t in range(T - 1):
        nodes = ids[both[t]]
        order = nodes[np.lexsort((nodes, -disp[t, nodes]))]
        per_step.append(order)
        top = order[:math.ceil(ACTIVE_FRACTION * len(order))]
        active.append(top)
        counts[top] += 1
    covered = ids[both.any(axis=0)]
    ranking = covered[np.lexsort((covered, -summed[covered], -counts[covered]))]
    return ActivityRanking(per_step=per_step, displacement=disp, active=active,
                           active_counts=counts, evolving_ranking=ranking,
                           labels=embeddings.labels)


# --------------------------------------------------------------------------
# link prediction

def roc_auc(labels, scores):
    """Area under the ROC curve via the Mann-Whitney statistic (ties count 1/2)."""
    labels = np.asarray(labels).astype(bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = labels.sum()
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("AUC needs both classes")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def edge_features(Y, pairs):
    """Per-dimension squared difference followed by the L2 distance."""
    pairs = np.asarray(pairs, dtype=np.int64)
    diff = Y[pairs[:, 0]] - Y[pairs[:, 1]]
    sq = diff ** 2
    return np.hstack([sq, np.sqrt(sq.sum(axis=1, keepdims=True))])


class LogisticRegression:
    """Binary logistic regression fitted by full-batch gradient descent.

    Features are standardised on the training data; a small L2 penalty
    keeps separable problems from diverging.
    """

    def __init__(self, lr=0.5, iterations=500, l2=1e-4):
        self.lr = lr
        self.iterations = iterations
        self.l2 = l2

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0)
        self.scale_[self.scale_ == 0] = 1.0
        Z = (X - self.mean_) / self.scale_
        n, d = Z.shape
        w = np.zeros(d)
        b = 0.0
        for _ in range(self.iterations):
            p = 1.0 / (1.0 + np.exp(-np.clip(Z @ w + b, -30, 30)))
            r = p - y
            w -= self.lr * (Z.T @ r / n + self.l2 * w)
            b -= self.lr * r.mean()
        self.coef_ = w
        self.intercept_ = b
        return self

    def decision_function(self, X):
        Z = (np.asarray(X, dtype=np.float64) - self.mean_) / self.scale_
        return Z @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        return 1.0 / (1.0 + np.exp(-np.clip(self.decision_function(X), -30, 30)))


def cross_validated_auc(X, y, seed=0, folds=5) -> EvalReport:
    """Mean held-out AUC of logistic regression over stratified folds."""
    y = np.asarray(y).astype(int)
    minority = int(min(y.sum(), len(y) - y.sum()))
    n_splits = min(folds, minority)
    if n_splits < 2:
        raise EvaluationError("need at least two examples of each class for cross-validation")
    skf = StratifiedKFold(n_splits=n_splits, shuffle=True, random_state=seed)
    scores = []
    for train_idx, test_idx in skf.split(X, y):
        clf = LogisticRegression().fit(X[train_idx], y[train_idx])
        scores.append(roc_auc(y[test_idx], clf.predict_proba(X[test_idx])))
    return EvalReport(task="link_prediction", metrics={"AUC": float(np.mean(scores))},
                      folds=[float(s) for s in scores], seed=seed)


def _pair_keys(u, v, n):
    lo = np.minimum(u, v).astype(np.int64)
    hi = np.maximum(u, v).astype(np.int64)
    return lo * n + hi


def link_pairs(train_stream, test_stream, seed=0):
    """Positive test pairs and an equal number of sampled non-edges.

    Positives are distinct test pairs whose endpoints both occur in the
    training stream. Negatives are uniform pairs of training nodes adjacent
    in neither stream.
    """
    if not np.array_equal(train_stream.labels, test_stream.labels):
        raise EvaluationError("train and test streams must share one node vocabulary")
    n = train_stream.node_count
    known = np.zeros(n, dtype=bool)
    known[train_stream.present_nodes()] = True
    keep = known[test_stream.source] & known[test_stream.target]
    pos_keys = np.unique(_pair_keys(test_stream.source[keep], test_stream.target[keep], n))
    if len(pos_keys) == 0:
        raise EvaluationError("no test edge joins two training nodes")
    adjacent = set(pos_keys.tolist())
    adjacent.update(np.unique(_pair_keys(train_stream.source, train_stream.target, n)).tolist())
    adjacent.update(np.unique(_pair_keys(test_stream.source, test_stream.target, n)).tolist())

    nodes = np.flatnonzero(known)
    rng = np.random.default_rng(seed)
    possible = len(nodes) * (len(nodes) - 1) // 2 - sum(
        1 for k in adjacent if known[k // n] and known[k % n])
    want = min(len(pos_keys), possible)
    neg = set()
    while len(neg) < want:
        a = rng.choice(nodes, size=2 * (want - len(neg)) + 8)
        b = rng.choice(nodes, size=len(a))
        for k in _pair_keys(a, b, n)[a != b].tolist():
            if k not in adjacent and k not in neg:
                neg.add(k)
                if len(neg) == want:
                    break
    neg_keys = np.array(sorted(neg), dtype=np.int64)
    pos = np.stack([pos_keys // n, pos_keys % n], axis=1)
    negs = np.stack([neg_keys // n, neg_keys % n], axis=1).reshape(-1, 2)
    return pos, negs


def link_prediction(embeddings, train_stream, test_stream, seed=0) -> EvalReport:
    """AUC of predicting test-period edges from final-timestep embeddings."""
    pos, neg = link_pairs(train_stream, test_stream, seed)
    Y = embeddings.M[-1]
    X = np.vstack([edge_features(Y, pos), edge_features(Y, neg)])
    y = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    report = cross_validated_auc(X, y, seed=seed)
    report.config_hash = config_hash(embeddings.config)
    report.details = {"positives": int(len(pos)), "negatives": int(len(neg))}
    return report


# --------------------------------------------------------------------------
# trajectories

def export_trajectories(embeddings, nodes, ranking=None, out=None):
    """Write ``node,t,dim_1..dim_D,displacement,active`` rows for `nodes`.

    `nodes` are original node identifiers. ``displacement`` at t is
    ||y(t+1) - y(t)|| and is empty at the last timestep. Returns the CSV
    text when `out` is None.
    """
    idx = embeddings.index_of(nodes)
    if ranking is None:
        ranking = detect_evolving(embeddings) if embeddings.T > 1 else None
    disp = displacements(embeddings.M)
    active = ranking.active_mask() if ranking is not None else np.zeros((0, embeddings.vocab_size), bool)
    buf = out if out is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node", "t"] + [f"dim_{d + 1}" for d in range(embeddings.D)] + ["displacement", "active"])
    for label, i in zip(nodes, idx):
        for t in range(embeddings.T):
            last = t == embeddings.T - 1
            w.writerow([label, t + 1] + [repr(float(x)) for x in embeddings.M[t, i]]
                       + ["" if last else repr(float(disp[t, i])),
                          "" if last else int(active[t, i])])
    if out is None:
        return buf.getvalue()
    return None
