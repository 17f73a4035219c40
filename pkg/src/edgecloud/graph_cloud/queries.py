"""Shortest-path, degree and PageRank queries over a range of snapshots."""

from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..fabric import HourBucket, bucket_label
from ..kernels import pagerank_csr
from .snapshot import AT, NEXT, Snapshot
from .store import GraphStore


@dataclass
class QueryResult:
    kind: str
    time_range: tuple[str, str]
    snapshot_ids: list[int]
    payload: dict
    units: dict[str, str] = field(default_factory=dict)

    def to_record(self) -> dict:
        """Machine-readable form with stable key order."""
        return {
            "kind": self.kind,
            "from": self.time_range[0],
            "to": self.time_range[1],
            "snapshot_ids": list(self.snapshot_ids),
            "payload": self.payload,
            "units": dict(sorted(self.units.items())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record())

    def to_table(self) -> str:
        head = f"{self.kind}  {self.time_range[0]} .. {self.time_range[1]}  snapshots={self.snapshot_ids}"
        p = self.payload
        if self.kind == "shortest-path":
            if not p["reachable"]:
                return head + "\nno path\n"
            return head + f"\ncost_s={p['cost_s']!r}  hops={len(p['path']) - 1}\n" + " -> ".join(p["path"]) + "\n"
        if self.kind == "degree":
            return (
                head
                + "\nstation  stop  move  total\n"
                + f"{p['station']}  {p['stop_degree']}  {p['move_degree']}  {p['total']}\n"
            )
        rows = sorted(p["scores"].items(), key=lambda kv: (-kv[1], kv[0]))
        body = "\n".join(f"{s}  {v:.9f}" for s, v in rows)
        return head + f"\niterations={p['iterations']}  sum={sum(p['scores'].values()):.12f}\nstation  score\n" + body + "\n"


def _range(store: GraphStore, start: HourBucket, end: HourBucket):
    snaps = store.resolve_range(start, end)
    return snaps, (bucket_label(start), bucket_label(end)), [s.snapshot_id for s in snaps]


# -- shortest path --------------------------------------------------------


def union_adjacency(snapshots: Sequence[Snapshot]) -> dict[str, list[tuple[str, int]]]:
    """NEXT edges forward in time; AT edges usable in both directions at cost 0."""
    adj: dict[str, list[tuple[str, int]]] = {}
    for snap in snapshots:
        for e in snap.next_edges:
            adj.setdefault(e.src, []).append((e.dst, e.weight_ms))
        for e in snap.at_edges:
            adj.setdefault(e.src, []).append((e.dst, 0))
            adj.setdefault(e.dst, []).append((e.src, 0))
    return adj


def lexmin_shortest_path(
    adj: dict[str, list[tuple[str, int]]], source: str, target: str
) -> tuple[Optional[int], list[str]]:
    """Minimum-cost simple path, ties broken by the smallest node-id sequence.

    Costs are integers, so "tight" edges (``dist[u] + w == dist[v]``) are
    exact. Every minimum-cost path uses only tight edges, so the answer is
    the lexicographically smallest simple source-target path in the tight
    subgraph, built greedily: at each step take the smallest successor from
    which the target is still reachable without revisiting the path.
    """
    if source == target:
        return 0, [source]
    dist = {source: 0}
    heap = [(0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        if u == target:
            break
        for v, w in adj.get(u, ()):
            nd = d + w
            if nd < dist.get(v, nd + 1):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    if target not in dist:
        return None, []
    best = dist[target]

    tight: dict[str, list[str]] = {}
    rtight: dict[str, list[str]] = {}
    for u, du in dist.items():
        if du > best:
            continue
        for v, w in adj.get(u, ()):
            dv = dist.get(v)
            if dv is not None and dv <= best and du + w == dv:
                tight.setdefault(u, []).append(v)
                rtight.setdefault(v, []).append(u)
    # nodes that can still reach the target over tight edges
    live = {target}
    todo = deque([target])
    while todo:
        v = todo.popleft()
        for u in rtight.get(v, ()):
            if u not in live:
                live.add(u)
                todo.append(u)
    for u in tight:
        tight[u] = sorted(set(v for v in tight[u] if v in live))

    def reaches(start: str, used: set[str]) -> bool:
        seen = {start}
        q = deque([start])
        while q:
            x = q.popleft()
            if x == target:
                return True
            for y in tight.get(x, ()):
                if y not in used and y not in seen:
                    seen.add(y)
                    q.append(y)
        return False

    path = [source]
    used = {source}
    cur = source
    while cur != target:
        for v in tight.get(cur, ()):
            if v not in used and reaches(v, used):
                break
        else:  # pragma: no cover - the loop invariant guarantees a successor
            raise RuntimeError("tight subgraph lost the target")
        path.append(v)
        used.add(v)
        cur = v
    return best, path


def shortest_path(
    store: GraphStore, start: HourBucket, end: HourBucket, from_station: str, to_station: str
) -> QueryResult:
    store.require_station(from_station)
    store.require_station(to_station)
    snaps, rng, ids = _range(store, start, end)
    cost, path = lexmin_shortest_path(union_adjacency(snaps), from_station, to_station)
    payload = {
        "from_station": from_station,
        "to_station": to_station,
        "reachable": cost is not None,
        "cost_s": None if cost is None else cost / 1000.0,
        "path": path,
    }
    return QueryResult("shortest-path", rng, ids, payload, {"cost_s": "seconds"})


# -- degree ---------------------------------------------------------------


def degree(store: GraphStore, start: HourBucket, end: HourBucket, station: str) -> QueryResult:
    """AT edges incident to ``station`` in range, split by observation role."""
    store.require_station(station)
    snaps, rng, ids = _range(store, start, end)
    stop = move = 0
    for s in snaps:
        a, b = s.degree_table().get(station, (0, 0))
        stop += a
        move += b
    payload = {"station": station, "stop_degree": stop, "move_degree": move, "total": stop + move}
    return QueryResult("degree", rng, ids, payload, {"degree": "AT edges"})


# -- station graph and PageRank -------------------------------------------


@dataclass
class StationGraph:
    nodes: list[str]  # sorted station ids
    weights: dict[tuple[str, str], int]  # (src, dst) -> observed transitions

    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        index = {s: i for i, s in enumerate(self.nodes)}
        rows: list[list[tuple[int, float]]] = [[] for _ in self.nodes]
        for (a, b), w in sorted(self.weights.items()):
            rows[index[a]].append((index[b], float(w)))
        indptr = np.zeros(len(self.nodes) + 1, dtype=np.int64)
        indices, weights = [], []
        for i, row in enumerate(rows):
            indptr[i + 1] = indptr[i] + len(row)
            for j, w in row:
                indices.append(j)
                weights.append(w)
        return indptr, np.array(indices, dtype=np.int64), np.array(weights, dtype=np.float64)


def station_graph(snapshots: Sequence[Snapshot]) -> StationGraph:
    """Transitions between consecutive station visits of each vehicle.

    A visit is an observation with at least one AT edge, attributed to its
    nearest station. Consecutive visits to the same station count as a
    self-transition, so dwelling shows up as weight on the station itself.
    """
    visits: dict[str, list[tuple[int, str]]] = {}
    for snap in snapshots:
        nearest = snap.nearest_station()
        for nid, sid in nearest.items():
            o = snap.observations[nid]
            visits.setdefault(o.vehicle_id, []).append((o.ts, sid))
    weights: dict[tuple[str, str], int] = {}
    nodes: set[str] = set()
    for vid in sorted(visits):
        seq = [s for _, s in sorted(visits[vid])]
        nodes.update(seq)
        for a, b in zip(seq, seq[1:]):
            weights[(a, b)] = weights.get((a, b), 0) + 1
    return StationGraph(sorted(nodes), weights)


def pagerank_scores(
    graph: StationGraph, damping: float = 0.85, tol: float = 1e-8, max_iter: int = 100
) -> tuple[dict[str, float], int]:
    """Weighted PageRank with uniform teleport; dangling rows spread uniformly."""
    if not 0.0 < damping < 1.0:
        raise ValueError("damping must lie in (0, 1)")
    if not graph.nodes:
        return {}, 0
    indptr, indices, weights = graph.csr()
    x, it = pagerank_csr(indptr, indices, weights, damping, tol, max_iter)
    return {s: float(v) for s, v in zip(graph.nodes, x)}, it


def pagerank(
    store: GraphStore,
    start: HourBucket,
    end: HourBucket,
    damping: float = 0.85,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> QueryResult:
    snaps, rng, ids = _range(store, start, end)
    scores, it = pagerank_scores(station_graph(snaps), damping, tol, max_iter)
    payload = {
        "scores": scores,
        "iterations": it,
        "damping": damping,
        "tol": tol,
        "max_iter": max_iter,
    }
    return QueryResult("pagerank", rng, ids, payload, {"score": "probability"})
