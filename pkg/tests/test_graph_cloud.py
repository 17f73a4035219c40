import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgecloud.fabric import HOUR_MS, Batch, hour_bucket
from edgecloud.feed_model import ContextTuple, MotionLabel
from edgecloud.feedgen import DEFAULT_START_MS
from edgecloud.graph_cloud import (
    AT,
    NEXT,
    CorruptBatchError,
    DuplicateHourError,
    GraphStore,
    IdempotencyError,
    LookupFailure,
    RangeError,
    StationGraph,
    StationTable,
    TimeTree,
    UsageError,
    degree,
    export_graph,
    graph_tables,
    import_edge_list,
    ingest_batch,
    pagerank,
    pagerank_scores,
    shortest_path,
    station_graph,
)
from oracles import brute_force_path, dense_pagerank, small_world, trajectory_graph

T0 = DEFAULT_START_MS
H0 = hour_bucket(T0)
LAT, LON = 46.1, -64.8
M = 1.0 / 111320.0  # one meter of latitude


def obs(vid, ts, north_m=0.0, label=MotionLabel.MOVE):
    return ContextTuple("r1", "1", vid, LAT + north_m * M, LON, ts, label)


def network(points):
    from edgecloud.feedgen import Network, Route, Station

    return Network(
        {s: Station(s, p[0], p[1], ("r1",)) for s, p in points.items()},
        {"r1": Route("r1", "1", tuple(sorted(points)), 600.0)},
    )


def batch(tuples, batch_id=1, bucket=None):
    tuples = tuple(sorted(tuples, key=lambda t: (t.ts, t.vehicle_id)))
    return Batch(batch_id, bucket or hour_bucket(tuples[0].ts), tuples)


def test_snapshot_structure():
    stations = StationTable.from_points({"A": (LAT, LON)})
    b = batch([obs("v", T0 + 5000 * i, d) for i, d in enumerate([0.0, 10.0, 29.5, 31.0])])
    snap = ingest_batch(b, stations)
    assert len(snap.observations) == 4
    assert [(e.kind, e.weight_ms) for e in snap.next_edges] == [(NEXT, 5000)] * 3
    assert sorted(e.src for e in snap.at_edges) == [f"v@{T0}", f"v@{T0 + 5000}", f"v@{T0 + 10000}"]
    assert all(e.kind == AT and e.dst == "A" and e.weight_ms == 0 for e in snap.at_edges)


def test_open_or_inconsistent_batches_are_corrupt():
    stations = StationTable.from_points({"A": (LAT, LON)})
    with pytest.raises(CorruptBatchError):
        ingest_batch(Batch(1, H0, (obs("v", T0),), closed=False), stations)
    with pytest.raises(CorruptBatchError):
        ingest_batch(Batch(1, H0, (obs("v", T0), obs("v", T0 + HOUR_MS))), stations)
    with pytest.raises(CorruptBatchError):
        ingest_batch(Batch(1, H0, (obs("v", T0), obs("v", T0, 3.0))), stations)


def test_timetree_resolve():
    tree = TimeTree()
    hours = [(2016, 6, 8, 12), (2016, 6, 8, 13), (2016, 6, 9, 0), (2016, 7, 1, 5)]
    for i, h in enumerate(hours, 1):
        tree.insert(h, i)
    assert len(tree) == 4
    assert [sid for _, sid in tree.resolve((2016, 6, 8, 13), (2016, 6, 30, 23))] == [2, 3]
    assert tree.resolve((2017, 1, 1, 0), (2017, 1, 1, 5)) == []
    assert [h for h, _ in tree.walk()] == hours
    with pytest.raises(RangeError):
        tree.resolve((2016, 6, 9, 0), (2016, 6, 8, 0))
    with pytest.raises(DuplicateHourError):
        tree.insert(hours[0], 9)
    with pytest.raises(ValueError):
        tree.insert((2016, 2, 30, 0), 10)


def _chain_store():
    # v passes A at T0, then sits at B from T0+60 s to T0+180 s; w joins only B
    pts = {"A": (LAT, LON), "B": (LAT + 500 * M, LON), "C": (LAT + 2000 * M, LON)}
    tuples = [
        obs("v", T0, 0.0),
        obs("v", T0 + 60_000, 250.0),
        obs("v", T0 + 120_000, 495.0),
        obs("v", T0 + 180_000, 500.0, MotionLabel.STOP),
        obs("w", T0 + 30_000, 502.0, MotionLabel.STOP),
        obs("w", T0 + 90_000, 498.0, MotionLabel.STOP),
        obs("w", T0 + 150_000, 510.0, MotionLabel.MOVE),
    ]
    store = GraphStore(network(pts))
    store.ingest_batch(batch(tuples))
    return store


def test_shortest_path_chain():
    store = _chain_store()
    res = shortest_path(store, H0, H0, "A", "B")
    p = res.payload
    assert p["reachable"] and p["cost_s"] == 120.0
    assert p["path"] == ["A", f"v@{T0}", f"v@{T0 + 60_000}", f"v@{T0 + 120_000}", "B"]
    assert res.snapshot_ids == [1]


def test_shortest_path_identity_and_unreachable():
    store = _chain_store()
    p = shortest_path(store, H0, H0, "B", "B").payload
    assert p["cost_s"] == 0.0 and p["path"] == ["B"]
    p = shortest_path(store, H0, H0, "A", "C").payload
    assert not p["reachable"] and p["path"] == [] and p["cost_s"] is None
    with pytest.raises(LookupFailure):
        shortest_path(store, H0, H0, "A", "Z")


def test_three_minute_chain_between_stations():
    pts = {"A": (LAT, LON), "B": (LAT + 1000 * M, LON)}
    tuples = [obs("v", T0 + 60_000 * i, 1000.0 * i / 3) for i in range(4)]
    store = GraphStore(network(pts))
    store.ingest_batch(batch(tuples))
    p = shortest_path(store, H0, H0, "A", "B").payload
    assert p["cost_s"] == 180.0 and len(p["path"]) == 6


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32))
def test_shortest_path_matches_brute_force(seed):
    rng = random.Random(seed)
    net, b, pts = small_world(rng)
    store = GraphStore(net)
    store.ingest_batch(b)
    adj = trajectory_graph(b.tuples, pts)
    for src in sorted(pts):
        for dst in sorted(pts):
            cost, path = brute_force_path(adj, src, dst)
            p = shortest_path(store, H0, H0, src, dst).payload
            if cost is None:
                assert not p["reachable"]
            else:
                assert p["cost_s"] == cost / 1000.0 and p["path"] == path


def test_degree_and_additivity():
    pts = {"A": (LAT, LON)}
    store = GraphStore(network(pts))
    first = [obs("v", T0 + 5000 * i, 1.0, MotionLabel.STOP) for i in range(3)] + [obs("w", T0, 5.0)]
    second = [obs("v", T0 + HOUR_MS + 5000 * i, 2.0, MotionLabel.STOP) for i in range(2)]
    store.ingest_batch(batch(first, 1))
    store.ingest_batch(batch(second, 2))
    h1 = hour_bucket(T0 + HOUR_MS)
    p = degree(store, H0, H0, "A").payload
    assert (p["stop_degree"], p["move_degree"], p["total"]) == (3, 1, 4)
    both = degree(store, H0, h1, "A").payload
    assert both["total"] == p["total"] + degree(store, h1, h1, "A").payload["total"] == 6
    assert degree(store, (2020, 1, 1, 0), (2020, 1, 1, 1), "A").payload["total"] == 0


def random_station_graph(rng, n):
    nodes = [f"S{i}" for i in range(n)]
    weights = {}
    for a in range(n):
        for b in range(n):
            if rng.random() < 0.35:
                weights[(nodes[a], nodes[b])] = rng.randint(1, 20)
    return StationGraph(nodes, weights)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 10))
def test_pagerank_matches_dense_oracle(seed, n):
    g = random_station_graph(random.Random(seed), n)
    scores, _ = pagerank_scores(g)
    index = {s: i for i, s in enumerate(g.nodes)}
    expect = dense_pagerank(n, {(index[a], index[b]): w for (a, b), w in g.weights.items()})
    got = np.array([scores[s] for s in g.nodes])
    np.testing.assert_allclose(got, expect, atol=1e-6)
    assert abs(got.sum() - 1.0) <= 1e-9 and (got >= 0).all()


def test_pagerank_small_cases():
    two, _ = pagerank_scores(StationGraph(["A", "B"], {("A", "B"): 1, ("B", "A"): 1}))
    assert two["A"] == pytest.approx(0.5, abs=1e-12) and two["B"] == pytest.approx(0.5, abs=1e-12)
    one, _ = pagerank_scores(StationGraph(["A"], {}))
    assert one == {"A": 1.0}
    assert pagerank_scores(StationGraph([], {})) == ({}, 0)
    with pytest.raises(ValueError):
        pagerank_scores(StationGraph(["A"], {}), damping=1.0)


def test_station_graph_counts_transitions():
    store = _chain_store()
    g = station_graph(store.resolve_range(H0, H0))
    # v: A, B(@120 s), B(@180 s); w: B, B, B
    assert g.nodes == ["A", "B"]
    assert g.weights == {("A", "B"): 1, ("B", "B"): 3}
    res = pagerank(store, H0, H0)
    assert sum(res.payload["scores"].values()) == pytest.approx(1.0, abs=1e-9)
    assert res.payload["scores"]["B"] > res.payload["scores"]["A"]


def test_query_result_serialisation():
    store = _chain_store()
    res = degree(store, H0, H0, "B")
    rec = res.to_record()
    assert rec["kind"] == "degree" and rec["from"] == rec["to"] == "2016-06-08T12"
    assert "station  stop  move  total" in res.to_table()
    assert shortest_path(store, H0, H0, "A", "C").to_table().endswith("no path\n")


def test_edgelist_export_round_trip(tmp_path):
    store = _chain_store()
    snaps = store.resolve_range(H0, H0)
    paths = export_graph(snaps, "edgelist", tmp_path)
    nodes, edges = import_edge_list(*paths)
    want_nodes, want_edges = graph_tables(snaps)
    assert set(nodes) == {row[0] for row in want_nodes}
    assert edges == [(s, d, k, float(w)) for s, d, k, w in want_edges]
    assert {n["role"] for n in nodes.values()} == {"stop", "move", "station"}
    assert "C" not in nodes  # no AT edge touches C


def test_dot_export_colours_roles(tmp_path):
    (path,) = export_graph(_chain_store().resolve_range(H0, H0), "dot", tmp_path)
    text = path.read_text()
    assert text.startswith("digraph mobility {")
    assert "color=red" in text and "color=green" in text and "color=grey" in text
    assert f'"v@{T0}" -> "A" [kind=AT, weight=0.0];' in text


def test_empty_export(tmp_path):
    nodes_csv, edges_csv = export_graph([], "edgelist", tmp_path)
    assert nodes_csv.read_text() == "id,role,lat,lon,vehicle_id,ts\n"
    assert edges_csv.read_text() == "src,dst,kind,weight\n"
    with pytest.raises(UsageError):
        export_graph([], "gexf", tmp_path)


def test_store_persists_and_reloads(tmp_path):
    pts = {"A": (LAT, LON), "B": (LAT + 500 * M, LON)}
    store = GraphStore(network(pts), root=tmp_path)
    store.ingest_batch(batch([obs("v", T0 + 60_000 * i, 250.0 * i) for i in range(3)], 1))
    store.ingest_batch(batch([obs("v", T0 + HOUR_MS + 60_000 * i, 500.0 - 250.0 * i) for i in range(3)], 2))
    assert (tmp_path / "snapshots/2016/06/08/12/edges.csv").exists()
    again = GraphStore.load(tmp_path)
    assert again.hours() == store.hours()
    h1 = hour_bucket(T0 + HOUR_MS)
    for q in (
        lambda s: shortest_path(s, H0, h1, "A", "B").to_record(),
        lambda s: degree(s, H0, h1, "A").to_record(),
        lambda s: pagerank(s, H0, h1).to_record(),
    ):
        assert q(again) == q(store)
    with pytest.raises(IdempotencyError):
        store.ingest_batch(batch([obs("v", T0 + 2 * HOUR_MS)], 2))
    with pytest.raises(FileNotFoundError):
        GraphStore.load(tmp_path / "nowhere")


def test_queries_do_not_mutate():
    store = _chain_store()
    a = [pagerank(store, H0, H0).to_json(), shortest_path(store, H0, H0, "A", "B").to_json()]
    b = [pagerank(store, H0, H0).to_json(), shortest_path(store, H0, H0, "A", "B").to_json()]
    assert a == b
    assert math.isclose(sum(pagerank(store, H0, H0).payload["scores"].values()), 1.0, abs_tol=1e-9)
