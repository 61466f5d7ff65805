"""Dynamic network embeddings for network evolution analysis."""
import os

# TBB in this image is too old for numba; avoid the probe warning.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

from .dbe import EmbeddingSet, TrainConfig, train  # noqa: E402
from .temporal_graph import (  # noqa: E402
    DynamicNetwork,
    EventStream,
    build_by_events,
    build_by_time,
    ingest_edge_list,
    time_split,
)
from .walks import WalkSet, random_walks  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "DynamicNetwork",
    "EmbeddingSet",
    "EventStream",
    "TrainConfig",
    "WalkSet",
    "build_by_events",
    "build_by_time",
    "ingest_edge_list",
    "random_walks",
    "time_split",
    "train",
]
