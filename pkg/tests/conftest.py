import os
import time

os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

import numpy as np
import pytest

from dynemb.temporal_graph import build_by_time, stream_from_edges


def clique_edges(sizes, t=0.0):
    edges, base = [], 0
    for n in sizes:
        for i in range(n):
            for j in range(i + 1, n):
                edges.append((base + i, base + j, t))
        base += n
    return edges


@pytest.fixture
def two_cliques():
    """Two disjoint 20-node cliques in a single snapshot."""
    stream = stream_from_edges(clique_edges([20, 20]))
    return build_by_time(stream, 1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---- acceptance reporting --------------------------------------------------

_acceptance_key = pytest.StashKey[list]()


class _Criterion:
    def __init__(self, lines, number, title, limit):
        self.lines, self.number, self.title, self.limit = lines, number, title, limit
        self.detail = ""

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        slow = self.limit is not None and elapsed > self.limit
        if exc_type is not None and issubclass(exc_type, pytest.skip.Exception):
            status = "SKIP"
        else:
            status = "FAIL" if exc_type is not None or slow else "PASS"
        limit = f" limit {self.limit:g}s" if self.limit is not None else ""
        line = f"[{status}] criterion {self.number}: {self.title} ({elapsed:.1f}s{limit}) {self.detail}".rstrip()
        self.lines.append(line)
        print(line)
        if exc_type is None and slow:
            raise AssertionError(f"criterion {self.number} took {elapsed:.1f}s, limit {self.limit:g}s")
        return False


@pytest.fixture
def criterion(request):
    lines = request.config.stash.setdefault(_acceptance_key, [])
    return lambda number, title, limit=None: _Criterion(lines, number, title, limit)


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_acceptance_key, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
