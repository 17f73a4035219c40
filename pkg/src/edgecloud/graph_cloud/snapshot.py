"""Static trajectory graph for one hour of context tuples."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from ..fabric import Batch, HourBucket, bucket_label, hour_bucket
from ..feedgen import Network
from ..geo import geo_distance
from ..kernels import radius_join

DEFAULT_STATION_RADIUS_M = 30.0

NEXT = "NEXT"
AT = "AT"
STATION = "station"


class CorruptBatchError(ValueError):
    pass


@dataclass(frozen=True)
class StationTable:
    ids: tuple[str, ...]
    lat: np.ndarray
    lon: np.ndarray

    @classmethod
    def from_network(cls, network: Network) -> "StationTable":
        ids = tuple(sorted(network.stations))
        lat = np.array([network.stations[s].lat for s in ids], dtype=np.float64)
        lon = np.array([network.stations[s].lon for s in ids], dtype=np.float64)
        return cls(ids, lat, lon)

    @classmethod
    def from_points(cls, points: dict[str, tuple[float, float]]) -> "StationTable":
        ids = tuple(sorted(points))
        return cls(
            ids,
            np.array([points[s][0] for s in ids], dtype=np.float64),
            np.array([points[s][1] for s in ids], dtype=np.float64),
        )

    def __contains__(self, station_id: str) -> bool:
        return station_id in self._index

    @property
    def _index(self) -> dict[str, int]:
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {s: i for i, s in enumerate(self.ids)}
            object.__setattr__(self, "_idx", idx)
        return idx

    def position(self, station_id: str) -> tuple[float, float]:
        i = self._index[station_id]
        return float(self.lat[i]), float(self.lon[i])


@dataclass(frozen=True)
class ObsNode:
    node_id: str
    vehicle_id: str
    ts: int
    lat: float
    lon: float
    role: str  # stop | move


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    kind: str  # NEXT | AT
    weight_ms: int = 0  # traversal cost; 0 for AT

    @property
    def weight_s(self) -> float:
        return self.weight_ms / 1000.0


def obs_id(vehicle_id: str, ts: int) -> str:
    return f"{vehicle_id}@{ts}"


@dataclass
class Snapshot:
    snapshot_id: int
    hour_bucket: HourBucket
    observations: dict[str, ObsNode]
    next_edges: list[Edge]
    at_edges: list[Edge]
    stations: StationTable
    _degrees: Optional[dict[str, tuple[int, int]]] = field(default=None, repr=False)

    @property
    def label(self) -> str:
        return bucket_label(self.hour_bucket)

    @property
    def edges(self) -> list[Edge]:
        return self.next_edges + self.at_edges

    def degree_table(self) -> dict[str, tuple[int, int]]:
        """``station -> (stop_degree, move_degree)`` over AT edges."""
        if self._degrees is None:
            table: dict[str, list[int]] = {}
            for e in self.at_edges:
                row = table.setdefault(e.dst, [0, 0])
                row[0 if self.observations[e.src].role == "stop" else 1] += 1
            self._degrees = {k: (v[0], v[1]) for k, v in table.items()}
        return self._degrees

    def nearest_station(self) -> dict[str, str]:
        """For each AT-linked observation, its closest station (ties by id)."""
        best: dict[str, tuple[float, str]] = {}
        for e in self.at_edges:
            o = self.observations[e.src]
            d = geo_distance((o.lat, o.lon), self.stations.position(e.dst))
            cur = best.get(e.src)
            if cur is None or (d, e.dst) < cur:
                best[e.src] = (d, e.dst)
        return {k: v[1] for k, v in best.items()}

    def edge_rows(self) -> list[str]:
        return [f"{e.src},{e.dst},{e.kind},{e.weight_s!r}" for e in self.edges]


def ingest_batch(
    batch: Batch,
    stations: StationTable,
    station_radius_m: float = DEFAULT_STATION_RADIUS_M,
) -> Snapshot:
    """Build the snapshot for a closed batch.

    One observation node per tuple; NEXT edges join ts-consecutive tuples of a
    vehicle (weight = elapsed ms); AT edges join each observation to every
    station within ``station_radius_m``.
    """
    if not batch.closed:
        raise CorruptBatchError(f"batch {batch.batch_id} is still open")
    obs: dict[str, ObsNode] = {}
    by_vehicle: dict[str, list[ObsNode]] = {}
    for t in batch.tuples:
        if hour_bucket(t.ts) != batch.hour_bucket:
            raise CorruptBatchError(
                f"tuple {t.vehicle_id}@{t.ts} is outside batch hour {batch.label}"
            )
        nid = obs_id(t.vehicle_id, t.ts)
        if nid in obs:
            raise CorruptBatchError(f"duplicate observation {nid} in batch {batch.batch_id}")
        node = ObsNode(nid, t.vehicle_id, t.ts, t.lat, t.lon, t.motion_label.value)
        obs[nid] = node
        by_vehicle.setdefault(t.vehicle_id, []).append(node)

    next_edges = []
    for vid in sorted(by_vehicle):
        chain = sorted(by_vehicle[vid], key=lambda n: n.ts)
        for a, b in zip(chain, chain[1:]):
            next_edges.append(Edge(a.node_id, b.node_id, NEXT, b.ts - a.ts))

    ordered = sorted(obs.values(), key=lambda n: (n.ts, n.vehicle_id))
    at_edges = []
    if ordered and stations.ids:
        oi, sj, _ = radius_join(
            np.array([n.lat for n in ordered]),
            np.array([n.lon for n in ordered]),
            stations.lat,
            stations.lon,
            station_radius_m,
        )
        for i, j in zip(oi.tolist(), sj.tolist()):
            at_edges.append(Edge(ordered[i].node_id, stations.ids[j], AT, 0))

    return Snapshot(
        batch.batch_id,
        batch.hour_bucket,
        {n.node_id: n for n in ordered},
        next_edges,
        at_edges,
        stations,
    )


def parse_edge_rows(lines: Iterable[str]) -> list[Edge]:
    out = []
    for line in lines:
        if not line or line.startswith("#") or line.startswith("src,"):
            continue
        src, dst, kind, w = line.split(",")
        if kind not in (NEXT, AT):
            raise ValueError(f"unknown edge kind {kind!r}")
        out.append(Edge(src, dst, kind, int(round(float(w) * 1000))))
    return out
