"""Temporal edge ingestion and snapshot construction.

A temporal edge stream is cut into a sequence of (possibly overlapping)
windows, either of fixed duration or of a fixed number of events. Each
window becomes one undirected weighted snapshot over a global node
vocabulary.
"""
from __future__ import annotations

import io
import logging
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import EmptyInputError, ParseError, SplitError, StrideError

logger = logging.getLogger(__name__)

DEFAULT_SCHEMA = {"source": 0, "target": 1, "timestamp": 2, "weight": 3}

_SPLIT = re.compile(r"[\s,]+")


class TemporalEdge(NamedTuple):
    source: int
    target: int
    timestamp: float
    weight: float = 1.0


@dataclass(frozen=True)
class EventStream:
    """Time-ordered temporal edges over a dense 0-based node vocabulary.

    ``labels[i]`` is the original identifier of dense node ``i``. Streams
    derived from one another (e.g. by :func:`time_split`) share labels, so
    node indices stay comparable.
    """

    source: np.ndarray
    target: np.ndarray
    timestamp: np.ndarray
    weight: np.ndarray
    labels: np.ndarray
    self_loops_skipped: int = 0

    def __post_init__(self):
        if np.any(np.diff(self.timestamp) < 0):
            raise ValueError("EventStream timestamps must be non-decreasing")

    def __len__(self):
        return len(self.timestamp)

    @property
    def node_count(self):
        return len(self.labels)

    def present_nodes(self):
        """Sorted dense IDs of nodes incident to at least one edge."""
        return np.unique(np.concatenate([self.source, self.target]))

    def edges(self) -> Iterator[TemporalEdge]:
        for u, v, t, w in zip(self.source, self.target, self.timestamp, self.weight):
            yield TemporalEdge(int(u), int(v), float(t), float(w))

    def labelled_edges(self) -> Iterator[TemporalEdge]:
        """Edges expressed in original node identifiers."""
        for e in self.edges():
            yield TemporalEdge(int(self.labels[e.source]), int(self.labels[e.target]),
                               e.timestamp, e.weight)

    def subset(self, index):
        return EventStream(self.source[index], self.target[index], self.timestamp[index],
                           self.weight[index], self.labels)


def _read_text(source):
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("utf-8")
    if isinstance(source, io.IOBase):
        data = source.read()
        return data.decode("utf-8") if isinstance(data, bytes) else data
    path = Path(os.fspath(source))
    return path.read_text(encoding="utf-8")


def _parse_node(token, lineno):
    try:
        value = int(token)
    except ValueError:
        try:
            f = float(token)
        except ValueError:
            raise ParseError(lineno, f"non-numeric node id {token!r}") from None
        if not f.is_integer():
            raise ParseError(lineno, f"node id {token!r} is not an integer") from None
        value = int(f)
    if value < 0:
        raise ParseError(lineno, f"negative node id {value}")
    return value


def ingest_edge_list(source, schema=None) -> EventStream:
    """Parse a "src dst timestamp [weight]" edge list into an EventStream.

    `source` is a path, raw bytes, or an open file. `schema` maps the
    fields ``source``, ``target``, ``timestamp`` and optionally ``weight``
    to 0-based column positions. Lines starting with ``%`` or ``#`` are
    comments. Self-loops are dropped and counted.
    """
    cols = dict(DEFAULT_SCHEMA)
    if schema:
        cols.update(schema)
    weight_col = cols.get("weight")
    required = max(cols["source"], cols["target"], cols["timestamp"]) + 1

    src, dst, ts, ws = [], [], [], []
    loops = 0
    for lineno, raw in enumerate(_read_text(source).splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "%#":
            continue
        parts = [p for p in _SPLIT.split(line) if p]
        if len(parts) < required or len(parts) > max(required, (weight_col or 0) + 1, 4):
            raise ParseError(lineno, f"expected {required} or more fields, got {len(parts)}")
        u = _parse_node(parts[cols["source"]], lineno)
        v = _parse_node(parts[cols["target"]], lineno)
        try:
            t = float(parts[cols["timestamp"]])
            w = float(parts[weight_col]) if weight_col is not None and weight_col < len(parts) else 1.0
        except ValueError:
            raise ParseError(lineno, "non-numeric timestamp or weight") from None
        if not math.isfinite(t):
            raise ParseError(lineno, "timestamp is not finite")
        if not (w > 0 and math.isfinite(w)):
            raise ParseError(lineno, f"weight must be positive, got {w}")
        if u == v:
            loops += 1
            continue
        src.append(u)
        dst.append(v)
        ts.append(t)
        ws.append(w)

    if loops:
        logger.warning("skipped %d self-loop(s)", loops)
    if not src:
        raise EmptyInputError("edge list contains no usable edges")

    src_a = np.asarray(src, dtype=np.int64)
    dst_a = np.asarray(dst, dtype=np.int64)
    labels, inverse = np.unique(np.concatenate([src_a, dst_a]), return_inverse=True)
    n = len(src_a)
    order = np.argsort(np.asarray(ts), kind="stable")
    return EventStream(
        source=inverse[:n][order].astype(np.int64),
        target=inverse[n:][order].astype(np.int64),
        timestamp=np.asarray(ts, dtype=np.float64)[order],
        weight=np.asarray(ws, dtype=np.float64)[order],
        labels=labels,
        self_loops_skipped=loops,
    )


def stream_from_edges(edges, labels=None) -> EventStream:
    """Build a stream from in-memory ``(u, v, t[, w])`` tuples of dense IDs."""
    rows = [tuple(e) for e in edges if e[0] != e[1]]
    if not rows:
        raise EmptyInputError("no usable edges")
    u = np.array([r[0] for r in rows], dtype=np.int64)
    v = np.array([r[1] for r in rows], dtype=np.int64)
    t = np.array([r[2] for r in rows], dtype=np.float64)
    w = np.array([r[3] if len(r) > 3 else 1.0 for r in rows], dtype=np.float64)
    if labels is None:
        labels = np.arange(int(max(u.max(), v.max())) + 1)
    order = np.argsort(t, kind="stable")
    return EventStream(u[order], v[order], t[order], w[order], np.asarray(labels))


@dataclass(frozen=True)
class Snapshot:
    """One static undirected weighted graph G_t.

    `adjacency` is a symmetric CSR matrix over the global vocabulary;
    parallel temporal edges are summed into one weighted entry.
    """

    index: int
    nodes: np.ndarray
    adjacency: sp.csr_matrix
    span: tuple
    raw_edge_count: int

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_edges(self):
        return self.adjacency.nnz // 2

    def degrees(self):
        """Distinct-neighbour count for every vocabulary node."""
        return np.diff(self.adjacency.indptr)

    def neighbors(self, u):
        a = self.adjacency
        return a.indices[a.indptr[u]:a.indptr[u + 1]]

    def edge_list(self):
        """``(u, v, weight)`` arrays with u < v."""
        coo = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]


def _snapshot(index, stream, lo, hi, span, n):
    u = stream.source[lo:hi]
    v = stream.target[lo:hi]
    w = stream.weight[lo:hi]
    rows = np.concatenate([u, v])
    cols = np.concatenate([v, u])
    adj = sp.coo_matrix((np.concatenate([w, w]), (rows, cols)), shape=(n, n)).tocsr()
    adj.sum_duplicates()
    adj.sort_indices()
    nodes = np.unique(rows)
    return Snapshot(index=index, nodes=nodes, adjacency=adj, span=span, raw_edge_count=hi - lo)


@dataclass(frozen=True)
class DynamicNetwork:
    snapshots: tuple
    strategy: str
    window: float
    stride: float
    labels: np.ndarray = field(repr=False)

    @property
    def T(self):
        return len(self.snapshots)

    @property
    def gamma(self):
        return (self.window - self.stride) / self.window

    @property
    def num_nodes(self):
        return len(self.labels)

    def __iter__(self):
        return iter(self.snapshots)

    def __getitem__(self, i):
        return self.snapshots[i]

    def manifest(self):
        return {
            "T": self.T,
            "strategy": self.strategy,
            "window": self.window,
            "stride": self.stride,
            "gamma": self.gamma,
            "vocabulary_size": self.num_nodes,
            "snapshots": [
                {"t": s.index, "span": list(s.span), "nodes": s.num_nodes,
                 "edges": s.num_edges, "temporal_edges": s.raw_edge_count}
                for s in self.snapshots
            ],
        }


def _check_stride(window, stride, name):
    if not window > 0:
        raise StrideError(f"{name} window must be positive, got {window}")
    if not stride > 0:
        raise StrideError(f"stride must be positive, got {stride}")
    if stride > window:
        raise StrideError(f"stride {stride} exceeds window {window}")


def build_by_time(stream: EventStream, window, stride) -> DynamicNetwork:
    """Fixed-duration windows [S_t, S_t + window) advancing by `stride`.

    S_1 is the first timestamp. Windows are emitted until one reaches past
    the last timestamp; later windows would only repeat its tail.
    """
    _check_stride(window, stride, "time")
    if len(stream) == 0:
        raise EmptyInputError("empty event stream")
    ts = stream.timestamp
    first, last = ts[0], ts[-1]
    snaps = []
    t = 0
    while True:
        start = first + t * stride
        end = start + window
        lo = int(np.searchsorted(ts, start, side="left"))
        hi = int(np.searchsorted(ts, end, side="left"))
        snaps.append(_snapshot(t + 1, stream, lo, hi, (float(start), float(end)), stream.node_count))
        if end > last:
            break
        t += 1
    empty = sum(1 for s in snaps if s.raw_edge_count == 0)
    if empty:
        logger.warning("%d of %d time windows contain no edges", empty, len(snaps))
    return DynamicNetwork(tuple(snaps), "time", float(window), float(stride), stream.labels)


def build_by_events(stream: EventStream, window, stride) -> DynamicNetwork:
    """Fixed-count windows over event indices ((t-1)*stride, (t-1)*stride + window]."""
    if int(window) != window or int(stride) != stride:
        raise StrideError("event window and stride must be integers")
    window, stride = int(window), int(stride)
    if window < 1:
        raise StrideError(f"event window must be >= 1, got {window}")
    _check_stride(window, stride, "event")
    n = len(stream)
    if n == 0:
        raise EmptyInputError("empty event stream")
    snaps = []
    t = 0
    while True:
        lo = t * stride
        hi = min(lo + window, n)
        snaps.append(_snapshot(t + 1, stream, lo, hi, (lo, lo + window), stream.node_count))
        if lo + window >= n:
            break
        t += 1
    return DynamicNetwork(tuple(snaps), "events", float(window), float(stride), stream.labels)


def time_split(stream: EventStream, train_fraction) -> tuple:
    """First floor(N * fraction) edges for training, the rest for testing."""
    if not 0 < train_fraction < 1:
        raise SplitError(f"train fraction must lie in (0, 1), got {train_fraction}")
    cut = int(math.floor(len(stream) * train_fraction))
    if cut == 0 or cut == len(stream):
        raise SplitError(f"split of {len(stream)} edges at {train_fraction} leaves one side empty")
    return stream.subset(slice(0, cut)), stream.subset(slice(cut, None))
