"""Snapshot registry with on-disk persistence.

Layout under the store root::

    network.txt
    snapshots/<year>/<month>/<day>/<hour>/batch.txt
    snapshots/<year>/<month>/<day>/<hour>/edges.csv
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Optional

from ..fabric import Batch, HourBucket
from ..feed_model import write_lines
from ..feedgen import Network
from .snapshot import (
    DEFAULT_STATION_RADIUS_M,
    AT,
    Edge,
    ObsNode,
    Snapshot,
    StationTable,
    ingest_batch,
    obs_id,
    parse_edge_rows,
)
from .timetree import TimeTree

EDGE_HEADER = "src,dst,kind,weight"


class IdempotencyError(ValueError):
    pass


class LookupFailure(KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


def snapshot_dir(root: Path, bucket: HourBucket) -> Path:
    y, m, d, h = bucket
    return root / "snapshots" / f"{y:04d}" / f"{m:02d}" / f"{d:02d}" / f"{h:02d}"


class GraphStore:
    """Time-tree-indexed snapshots. One writer, any number of readers."""

    def __init__(
        self,
        network: Network,
        station_radius_m: float = DEFAULT_STATION_RADIUS_M,
        root: Optional[Path] = None,
    ):
        self.network = network
        self.stations = StationTable.from_network(network)
        self.station_radius_m = station_radius_m
        self.tree = TimeTree()
        self.snapshots: dict[int, Snapshot] = {}
        self.root = Path(root) if root is not None else None
        self._lock = threading.Lock()
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            net_path = self.root / "network.txt"
            if not net_path.exists():
                network.save(net_path)

    def require_station(self, station_id: str) -> None:
        if station_id not in self.stations:
            raise LookupFailure(f"unknown station {station_id!r}")

    def ingest_batch(self, batch: Batch) -> Snapshot:
        if batch.batch_id in self.snapshots:
            raise IdempotencyError(f"batch {batch.batch_id} already ingested")
        snap = ingest_batch(batch, self.stations, self.station_radius_m)
        self._register(snap, batch)
        return snap

    def _register(self, snap: Snapshot, batch: Optional[Batch]) -> None:
        with self._lock:
            if snap.snapshot_id in self.snapshots:
                raise IdempotencyError(f"batch {snap.snapshot_id} already ingested")
            self.tree.insert(snap.hour_bucket, snap.snapshot_id)
            self.snapshots[snap.snapshot_id] = snap
        if self.root is not None and batch is not None:
            d = snapshot_dir(self.root, snap.hour_bucket)
            d.mkdir(parents=True, exist_ok=True)
            batch.save(d / "batch.txt")
            write_lines(d / "edges.csv", snap.edge_rows(), header=[EDGE_HEADER])

    def resolve_range(self, start: HourBucket, end: HourBucket) -> list[Snapshot]:
        return [self.snapshots[sid] for _, sid in self.tree.resolve(start, end)]

    def hours(self) -> list[HourBucket]:
        return [b for b, _ in self.tree.walk()]

    @classmethod
    def load(cls, root, station_radius_m: float = DEFAULT_STATION_RADIUS_M) -> "GraphStore":
        """Reopen a persisted store; edges come from ``edges.csv`` as written."""
        root = Path(root)
        net_path = root / "network.txt"
        if not net_path.exists():
            raise FileNotFoundError(f"no network.txt under {root}")
        store = cls(Network.load(net_path), station_radius_m)
        store.root = root
        for batch_path in sorted((root / "snapshots").glob("*/*/*/*/batch.txt")):
            batch = Batch.load(batch_path)
            with open(batch_path.parent / "edges.csv", encoding="utf-8") as fh:
                edges = parse_edge_rows(fh.read().splitlines())
            obs = {}
            for t in sorted(batch.tuples, key=lambda t: (t.ts, t.vehicle_id)):
                nid = obs_id(t.vehicle_id, t.ts)
                obs[nid] = ObsNode(nid, t.vehicle_id, t.ts, t.lat, t.lon, t.motion_label.value)
            snap = Snapshot(
                batch.batch_id,
                batch.hour_bucket,
                obs,
                [e for e in edges if e.kind != AT],
                [e for e in edges if e.kind == AT],
                store.stations,
            )
            store._register(snap, None)
        return store
