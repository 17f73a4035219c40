"""Run configuration and the concurrent edge -> fabric -> cloud topology.

``run_pipeline`` shards the feed by ``vehicle_id`` over N edge-node threads.
Each node pushes chunks of cleaned tuples into its own bounded queue; a single
fabric thread merges the node queues by ``arrival_seq`` (so the result never
depends on thread scheduling) and hands closed batches to the cloud thread
through another bounded queue. Full queues block the producer.
"""

from __future__ import annotations

import heapq
import queue
import shutil
import threading
import zlib
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .edge_node import CleaningConfig, CleaningReport, EdgeNode
from .fabric import DEFAULT_LATENESS_S, DEFAULT_STOP_THRESHOLD_M, Fabric, FabricMetrics, bucket_label
from .feed_model import CleanTuple, iter_lines
from .feedgen import Network
from .graph_cloud import DEFAULT_STATION_RADIUS_M, GraphStore

CONFIG_ENV = "EDGECLOUD_CONFIG"
CHUNK = 512
_DONE = object()


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    feed: str = "feed.txt"
    network: str = "network.txt"
    snapshot_dir: str = "store"
    report_dir: str = "reports"
    expected_cadence: float = 5.0
    gap_factor: float = 1.5
    session_start: int = 0
    session_end: int = 2**62
    lateness_bound: float = DEFAULT_LATENESS_S
    stop_threshold: float = DEFAULT_STOP_THRESHOLD_M
    station_radius: float = DEFAULT_STATION_RADIUS_M
    damping: float = 0.85
    tol: float = 1e-8
    max_iter: int = 100
    edge_nodes: int = 4
    queue_size: int = 64  # chunks per queue
    seed: int = 0
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    _KEYS = ()  # filled below

    def validate(self) -> None:
        for name in ("expected_cadence", "lateness_bound", "stop_threshold", "station_radius", "tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.gap_factor <= 1:
            raise ConfigError("gap_factor must be > 1")
        if not 0 < self.damping < 1:
            raise ConfigError("damping must be in (0, 1)")
        if self.max_iter < 1 or self.edge_nodes < 1 or self.queue_size < 1:
            raise ConfigError("max_iter, edge_nodes and queue_size must be >= 1")
        if not self.session_start < self.session_end:
            raise ConfigError("session_start must be before session_end")

    def path(self, name: str) -> Path:
        p = Path(getattr(self, name))
        return p if p.is_absolute() else self.base_dir / p

    def cleaning(self, known_routes: dict[str, str]) -> CleaningConfig:
        return CleaningConfig(
            expected_cadence=self.expected_cadence,
            gap_factor=self.gap_factor,
            session_window=(self.session_start, self.session_end),
            known_routes=dict(known_routes),
        )

    def to_text(self) -> str:
        out = []
        for name in self._KEYS:
            v = getattr(self, name)
            out.append(f"{name}={v!r}" if isinstance(v, float) else f"{name}={v}")
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str, base_dir: Path = Path(".")) -> "PipelineConfig":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or key not in cls._KEYS:
                raise ConfigError(f"line {n}: unknown setting {key!r}")
            value = value.strip()
            kind = types[key]
            try:
                kwargs[key] = int(value) if kind == "int" else float(value) if kind == "float" else value
            except ValueError:
                raise ConfigError(f"line {n}: bad value {value!r} for {key}") from None
        cfg = cls(**kwargs, base_dir=Path(base_dir))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        return cls.from_text(path.read_text(encoding="utf-8"), path.parent)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


PipelineConfig._KEYS = tuple(f.name for f in fields(PipelineConfig) if f.name != "base_dir")


def shard_of(line: str, n: int) -> int:
    """Edge node index for a feed line, keyed on its vehicle_id column."""
    cols = line.split(",", 3)
    vid = cols[2] if len(cols) > 2 else ""
    return zlib.crc32(vid.encode("utf-8")) % n


@dataclass
class RunResult:
    edge_reports: list[CleaningReport]
    fabric_metrics: FabricMetrics
    snapshots: int
    hours: list[str]

    @property
    def tuples_in(self) -> int:
        return sum(r.input_count for r in self.edge_reports)

    @property
    def tuples_out(self) -> int:
        return self.fabric_metrics.tuples_out

    @property
    def rejected(self) -> int:
        return sum(r.rejected for r in self.edge_reports) + self.fabric_metrics.late_drops

    def summary(self) -> str:
        return (
            f"tuples_in={self.tuples_in} tuples_out={self.tuples_out} rejected={self.rejected} "
            f"late_drops={self.fabric_metrics.late_drops} batches={self.fabric_metrics.batches_closed} "
            f"snapshots={self.snapshots}"
        )


class _Stop(Exception):
    pass


def _put(q: queue.Queue, item, stop: threading.Event) -> None:
    # blocks while the queue is full, but gives up if another stage failed
    while True:
        try:
            q.put(item, timeout=0.1)
            return
        except queue.Full:
            if stop.is_set():
                raise _Stop() from None


def _get(q: queue.Queue, stop: threading.Event):
    while True:
        try:
            return q.get(timeout=0.1)
        except queue.Empty:
            if stop.is_set():
                raise _Stop() from None


def run_pipeline(cfg: PipelineConfig, network: Optional[Network] = None) -> RunResult:
    """Clean, order, contextualise, batch and ingest the configured feed.

    Writes ``edge-<k>.txt`` and ``fabric.txt`` under the report directory and
    the snapshot tree under the snapshot directory (replacing a previous run's
    snapshots there).
    """
    cfg.validate()
    feed_path = cfg.path("feed")
    if not feed_path.is_file():
        raise ConfigError(f"feed file not found: {feed_path}")
    if network is None:
        net_path = cfg.path("network")
        if not net_path.is_file():
            raise ConfigError(f"network file not found: {net_path}")
        network = Network.load(net_path)

    store_root = cfg.path("snapshot_dir")
    if (store_root / "snapshots").exists():
        shutil.rmtree(store_root / "snapshots")
    if (store_root / "network.txt").exists():
        (store_root / "network.txt").unlink()
    store = GraphStore(network, cfg.station_radius, root=store_root)
    report_dir = cfg.path("report_dir")
    report_dir.mkdir(parents=True, exist_ok=True)

    n = cfg.edge_nodes
    clean_cfg = cfg.cleaning(network.route_numbers)
    nodes = [EdgeNode(clean_cfg, f"edge{k}") for k in range(n)]
    inputs = [queue.Queue(maxsize=cfg.queue_size) for _ in range(n)]
    outputs = [queue.Queue(maxsize=cfg.queue_size) for _ in range(n)]
    to_cloud: queue.Queue = queue.Queue(maxsize=cfg.queue_size)
    stop = threading.Event()
    errors: list[StageError] = []
    fabric = Fabric(cfg.lateness_bound, cfg.stop_threshold, sources=range(n))

    def guarded(stage: str, fn):
        def body():
            try:
                fn()
            except _Stop:
                pass
            except BaseException as exc:  # noqa: BLE001 - reported with the stage name
                errors.append(StageError(stage, exc))
                stop.set()

        return body

    def reader():
        pending = [[] for _ in range(n)]
        for seq, line in enumerate(iter_lines(feed_path)):
            k = shard_of(line, n)
            pending[k].append((seq, line))
            if len(pending[k]) >= CHUNK:
                _put(inputs[k], pending[k], stop)
                pending[k] = []
        for k in range(n):
            if pending[k]:
                _put(inputs[k], pending[k], stop)
            _put(inputs[k], _DONE, stop)

    def edge(k: int):
        node = nodes[k]
        while True:
            chunk = _get(inputs[k], stop)
            if chunk is _DONE:
                break
            out = []
            for seq, line in chunk:
                c = node.process_line(line, seq)
                if c is not None:
                    out.append(c)
            if out:
                _put(outputs[k], out, stop)
        node.finish()
        _put(outputs[k], _DONE, stop)

    def fabric_stage():
        chunks: list[list[CleanTuple]] = [[] for _ in range(n)]
        pos = [0] * n

        def pull(k: int) -> Optional[CleanTuple]:
            if pos[k] >= len(chunks[k]):
                nxt = _get(outputs[k], stop)
                if nxt is _DONE:
                    return None
                chunks[k], pos[k] = nxt, 0
            t = chunks[k][pos[k]]
            pos[k] += 1
            return t

        heap = []
        for k in range(n):
            t = pull(k)
            if t is None:
                emit(fabric.close_source(k))
            else:
                heap.append((t.arrival_seq, k, t))
        heapq.heapify(heap)
        while heap:
            _, k, t = heapq.heappop(heap)
            emit(fabric.push(t, k))
            nxt = pull(k)
            if nxt is None:
                emit(fabric.close_source(k))
            else:
                heapq.heappush(heap, (nxt.arrival_seq, k, nxt))
        emit(fabric.finish())
        _put(to_cloud, _DONE, stop)

    def emit(batches):
        for b in batches:
            _put(to_cloud, b, stop)

    def cloud():
        while True:
            b = _get(to_cloud, stop)
            if b is _DONE:
                break
            store.ingest_batch(b)

    threads = [threading.Thread(target=guarded("reader", reader), name="reader")]
    threads += [
        threading.Thread(target=guarded(f"edge node {k}", lambda k=k: edge(k)), name=f"edge{k}") for k in range(n)
    ]
    threads.append(threading.Thread(target=guarded("fabric", fabric_stage), name="fabric"))
    threads.append(threading.Thread(target=guarded("cloud", cloud), name="cloud"))
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if errors:
        raise errors[0]

    for k, node in enumerate(nodes):
        (report_dir / f"edge-{k}.txt").write_text(node.report.to_text(), encoding="utf-8")
    (report_dir / "fabric.txt").write_text(fabric.metrics.to_text(), encoding="utf-8")
    result = RunResult(
        [node.report for node in nodes],
        fabric.metrics,
        len(store.snapshots),
        [bucket_label(h) for h in store.hours()],
    )
    (report_dir / "summary.txt").write_text(result.summary() + "\n", encoding="utf-8")
    return result
