"""Graph export for external plotting: edge-list CSV or DOT text."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

from .snapshot import AT, STATION, Snapshot

NODE_HEADER = ["id", "role", "lat", "lon", "vehicle_id", "ts"]
EDGE_HEADER = ["src", "dst", "kind", "weight"]
FORMATS = ("edgelist", "dot")

_COLORS = {"stop": "red", "move": "green", STATION: "grey"}


class UsageError(ValueError):
    pass


def graph_tables(snapshots: Sequence[Snapshot]) -> tuple[list[list[str]], list[list[str]]]:
    """Node and edge rows for the union of ``snapshots``.

    Stations appear only when some AT edge in range touches them.
    """
    nodes: list[list[str]] = []
    edges: list[list[str]] = []
    stations: set[str] = set()
    table = None
    for snap in snapshots:
        table = snap.stations
        for o in snap.observations.values():
            nodes.append([o.node_id, o.role, repr(o.lat), repr(o.lon), o.vehicle_id, str(o.ts)])
        for e in snap.edges:
            edges.append([e.src, e.dst, e.kind, repr(e.weight_s)])
            if e.kind == AT:
                stations.add(e.dst)
    for s in sorted(stations):
        lat, lon = table.position(s)
        nodes.append([s, STATION, repr(lat), repr(lon), "", ""])
    return nodes, edges


def export_graph(snapshots: Sequence[Snapshot], fmt: str, out_dir) -> list[Path]:
    if fmt not in FORMATS:
        raise UsageError(f"unknown export format {fmt!r}; choose from {', '.join(FORMATS)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    nodes, edges = graph_tables(snapshots)
    if fmt == "edgelist":
        paths = [out / "nodes.csv", out / "edges.csv"]
        for path, header, rows in ((paths[0], NODE_HEADER, nodes), (paths[1], EDGE_HEADER, edges)):
            with open(path, "w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                w.writerows(rows)
        return paths
    path = out / "graph.dot"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("digraph mobility {\n")
        for nid, role, lat, lon, vid, ts in nodes:
            fh.write(f'  "{nid}" [role={role}, color={_COLORS[role]}, lat={lat}, lon={lon}];\n')
        for src, dst, kind, w in edges:
            fh.write(f'  "{src}" -> "{dst}" [kind={kind}, weight={w}];\n')
        fh.write("}\n")
    return [path]


def import_edge_list(nodes_csv, edges_csv) -> tuple[dict[str, dict[str, str]], list[tuple[str, str, str, float]]]:
    """Read an edge-list export back as ``(nodes by id, edge tuples)``."""
    with open(nodes_csv, encoding="utf-8", newline="") as fh:
        nodes = {row["id"]: row for row in csv.DictReader(fh)}
    with open(edges_csv, encoding="utf-8", newline="") as fh:
        edges = [(r["src"], r["dst"], r["kind"], float(r["weight"])) for r in csv.DictReader(fh)]
    return nodes, edges
