"""On-disk formats: snapshot dumps, walk corpora, embedding matrices, manifests."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .dbe import EmbeddingSet
from .errors import DynembError, ShapeError
from .temporal_graph import DynamicNetwork, Snapshot
from .walks import WalkSet

MANIFEST = "manifest.json"


def write_manifest(directory, payload):
    path = Path(directory) / MANIFEST
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def read_manifest(directory):
    path = Path(directory) / MANIFEST
    if not path.exists():
        raise DynembError(f"no {MANIFEST} in {directory}")
    return json.loads(path.read_text())


def _jsonable(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _fmt(x):
    return repr(float(x))


# --- snapshots -------------------------------------------------------------

def snapshot_name(t):
    return f"snapshot_{t:04d}.txt"


def write_snapshots(network: DynamicNetwork, directory, extra=None):
    """One ``u v weight`` file per timestep plus vocabulary and manifest."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    labels = network.labels
    for snap in network.snapshots:
        u, v, w = snap.edge_list()
        lines = [f"{labels[a]} {labels[b]} {_fmt(c)}\n" for a, b, c in zip(u, v, w)]
        (out / snapshot_name(snap.index)).write_text("".join(lines))
    (out / "vocabulary.txt").write_text("".join(f"{l}\n" for l in labels))
    payload = network.manifest()
    payload["files"] = [snapshot_name(s.index) for s in network.snapshots]
    if extra:
        payload.update(extra)
    write_manifest(out, payload)
    return out


def read_snapshots(directory) -> DynamicNetwork:
    src = Path(directory)
    man = read_manifest(src)
    labels = np.array([int(x) for x in (src / "vocabulary.txt").read_text().split()], dtype=np.int64)
    index = {int(l): i for i, l in enumerate(labels)}
    n = len(labels)
    snaps = []
    for entry, name in zip(man["snapshots"], man["files"]):
        data = np.loadtxt(src / name, ndmin=2) if (src / name).stat().st_size else np.zeros((0, 3))
        u = np.array([index[int(a)] for a in data[:, 0]], dtype=np.int64)
        v = np.array([index[int(b)] for b in data[:, 1]], dtype=np.int64)
        w = data[:, 2]
        adj = sp.coo_matrix((np.concatenate([w, w]), (np.concatenate([u, v]), np.concatenate([v, u]))),
                            shape=(n, n)).tocsr()
        adj.sort_indices()
        snaps.append(Snapshot(index=entry["t"], nodes=np.unique(np.concatenate([u, v])), adjacency=adj,
                              span=tuple(entry["span"]), raw_edge_count=entry["temporal_edges"]))
    return DynamicNetwork(tuple(snaps), man["strategy"], man["window"], man["stride"], labels)


# --- walks -------------------------------------------------------------------

def walk_name(t):
    return f"walks_{t:04d}.txt"


def write_walks(walksets, labels, directory, extra=None):
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for ws in walksets:
        with open(out / walk_name(ws.timestep), "w") as fh:
            for walk in ws.iter_walks():
                fh.write(" ".join(str(labels[x]) for x in walk) + "\n")
    payload = {"T": len(walksets), "files": [walk_name(ws.timestep) for ws in walksets],
               "walks": [len(ws) for ws in walksets], "seed": walksets[0].rng_seed if walksets else None}
    if extra:
        payload.update(extra)
    write_manifest(out, payload)
    return out


def read_walks(directory, labels):
    src = Path(directory)
    man = read_manifest(src)
    index = {int(l): i for i, l in enumerate(labels)}
    out = []
    for t, name in enumerate(man["files"], start=1):
        rows = [[index[int(x)] for x in line.split()] for line in (src / name).read_text().splitlines()]
        L = max((len(r) for r in rows), default=1)
        mat = np.full((len(rows), L), -1, dtype=np.int64)
        for k, r in enumerate(rows):
            mat[k, :len(r)] = r
        out.append(WalkSet(timestep=t, walks=mat, rng_seed=man.get("seed") or 0))
    return out


# --- matrices --------------------------------------------------------------

def write_matrix(path, labels, X):
    """Text matrix: header ``num_rows D`` then ``node_id v_1 ... v_D`` rows."""
    with open(path, "w") as fh:
        fh.write(f"{X.shape[0]} {X.shape[1]}\n")
        for label, row in zip(labels, X):
            fh.write(str(label) + " " + " ".join(_fmt(x) for x in row) + "\n")


def read_matrix(path):
    """Return ``(labels, X)`` from a text matrix file."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ShapeError(f"{path}: bad header")
        n, d = int(header[0]), int(header[1])
        data = np.loadtxt(fh, ndmin=2) if n else np.zeros((0, d + 1))
    if data.shape != (n, d + 1):
        raise ShapeError(f"{path}: expected {n} rows of {d + 1} fields, got {data.shape}")
    return data[:, 0].astype(np.int64), data[:, 1:]


def matrix_name(t, fmt="text"):
    return f"M_{t:04d}." + ("txt" if fmt == "text" else "npy")


def write_embeddings(emb: EmbeddingSet, directory, fmt="text", extra=None):
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for t in range(emb.T):
        name = matrix_name(t + 1, fmt)
        if fmt == "text":
            write_matrix(out / name, emb.labels, emb.M[t])
        else:
            np.save(out / name, emb.M[t])
        files.append(name)
    alpha_name = "alpha.txt" if fmt == "text" else "alpha.npy"
    if fmt == "text":
        write_matrix(out / alpha_name, emb.labels, emb.alpha)
    else:
        np.save(out / alpha_name, emb.alpha)
        np.save(out / "labels.npy", emb.labels)
    payload = {
        "T": emb.T, "D": emb.D, "vocabulary_size": emb.vocab_size, "format": fmt,
        "files": files, "alpha": alpha_name, "config": emb.config,
        "seed": emb.config.get("seed"), "objective": [float(x) for x in emb.objective],
        "present": [emb.labels[np.flatnonzero(p)].tolist() for p in emb.present],
    }
    if extra:
        payload.update(extra)
    write_manifest(out, payload)
    return out


def read_embeddings(directory) -> EmbeddingSet:
    src = Path(directory)
    man = read_manifest(src)
    if man.get("format", "text") == "text":
        mats = [read_matrix(src / f) for f in man["files"]]
        labels = mats[0][0]
        M = np.stack([m for _, m in mats])
        _, alpha = read_matrix(src / man["alpha"])
    else:
        M = np.stack([np.load(src / f) for f in man["files"]])
        alpha = np.load(src / man["alpha"])
        labels = np.load(src / "labels.npy")
    index = {int(l): i for i, l in enumerate(labels)}
    present = np.zeros(M.shape[:2], dtype=bool)
    for t, nodes in enumerate(man.get("present", [])):
        present[t, [index[int(x)] for x in nodes]] = True
    if "present" not in man:
        present[:] = True
    return EmbeddingSet(M=M, alpha=alpha, labels=labels, present=present,
                        objective=man.get("objective", []), config=man.get("config", {}))


def read_pretrained(directory, labels):
    """Pretrained matrices in the embedding format, reordered to `labels`."""
    emb = read_embeddings(directory)
    order = emb.index_of(labels)
    out = {"M": emb.M[:, order] if emb.T > 1 else emb.M[0, order], "alpha": emb.alpha[order]}
    return out


# --- synthetic ground truth --------------------------------------------------

def write_ground_truth(path, synth):
    mask = synth.is_evolving()
    with open(path, "w") as fh:
        for node in range(synth.config.N):
            comms = " ".join(str(int(c)) for c in synth.community_of[:, node])
            fh.write(f"{node} {int(mask[node])} {comms}\n")


def read_ground_truth(path):
    """Return the node IDs flagged as evolving."""
    evolving = []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if len(parts) >= 2 and not line.startswith(("#", "%")) and parts[1] == "1":
            evolving.append(int(parts[0]))
    return evolving
