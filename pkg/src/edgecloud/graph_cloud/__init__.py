"""Core layer: hourly trajectory snapshots indexed by a time tree."""

from .export import FORMATS, UsageError, export_graph, graph_tables, import_edge_list
from .queries import (
    QueryResult,
    StationGraph,
    degree,
    lexmin_shortest_path,
    pagerank,
    pagerank_scores,
    shortest_path,
    station_graph,
    union_adjacency,
)
from .snapshot import (
    AT,
    DEFAULT_STATION_RADIUS_M,
    NEXT,
    CorruptBatchError,
    Edge,
    ObsNode,
    Snapshot,
    StationTable,
    ingest_batch,
)
from .store import GraphStore, IdempotencyError, LookupFailure
from .timetree import DuplicateHourError, RangeError, TimeTree

__all__ = [
    "AT",
    "DEFAULT_STATION_RADIUS_M",
    "FORMATS",
    "NEXT",
    "CorruptBatchError",
    "DuplicateHourError",
    "Edge",
    "GraphStore",
    "IdempotencyError",
    "LookupFailure",
    "ObsNode",
    "QueryResult",
    "RangeError",
    "Snapshot",
    "StationGraph",
    "StationTable",
    "TimeTree",
    "UsageError",
    "degree",
    "export_graph",
    "graph_tables",
    "import_edge_list",
    "ingest_batch",
    "lexmin_shortest_path",
    "pagerank",
    "pagerank_scores",
    "shortest_path",
    "station_graph",
    "union_adjacency",
]
