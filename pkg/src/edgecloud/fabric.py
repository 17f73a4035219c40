"""Access-layer fabric between the edge nodes and the graph store.

Tuples from every edge node pass through one watermark-driven reorder buffer,
get a stop/move label against the vehicle's previous emitted position, and are
retained in hour batches until the watermark passes the end of the hour.
Query results travel the other way over a per-destination FIFO control channel.
"""

from __future__ import annotations

import heapq
import math
import threading
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Hashable, Iterable, Optional

from .feed_model import (
    CleanTuple,
    ContextTuple,
    MotionLabel,
    RejectReason,
    RejectRecord,
    Stage,
    RawTuple,
    iter_lines,
    parse_context,
    serialize_tuple,
    write_lines,
)
from .geo import geo_distance

HOUR_MS = 3_600_000
DEFAULT_LATENESS_S = 10.0
DEFAULT_STOP_THRESHOLD_M = 15.0

NEG_INF = -math.inf
POS_INF = math.inf

HourBucket = tuple[int, int, int, int]  # (year, month, day, hour), UTC


def hour_bucket(ts_ms: int) -> HourBucket:
    d = datetime.fromtimestamp((ts_ms // HOUR_MS) * 3600, tz=timezone.utc)
    return (d.year, d.month, d.day, d.hour)


def bucket_start_ms(bucket: HourBucket) -> int:
    y, m, d, h = bucket
    return int(datetime(y, m, d, h, tzinfo=timezone.utc).timestamp()) * 1000


def bucket_label(bucket: HourBucket) -> str:
    y, m, d, h = bucket
    return f"{y:04d}-{m:02d}-{d:02d}T{h:02d}"


def parse_bucket_label(text: str) -> HourBucket:
    date, _, hour = text.partition("T")
    y, m, d = date.split("-")
    b = (int(y), int(m), int(d), int(hour))
    bucket_start_ms(b)  # validates the calendar components
    return b


# -- watermark ------------------------------------------------------------


class Watermark:
    """Minimum over open sources of their highest ts, minus the lateness bound.

    A source that has not produced anything yet holds the watermark at -inf;
    a closed source stops holding it back. The value never decreases.
    """

    def __init__(self, lateness_bound_s: float = DEFAULT_LATENESS_S, sources: Iterable[Hashable] = ()):
        if lateness_bound_s < 0:
            raise ValueError("lateness bound must be >= 0")
        self.lateness_ms = int(round(lateness_bound_s * 1000))
        self._high: dict[Hashable, float] = {s: NEG_INF for s in sources}
        self._closed: set[Hashable] = set()
        self._value: float = NEG_INF

    @property
    def current(self) -> float:
        return self._value

    def _recompute(self) -> float:
        open_highs = [h for s, h in self._high.items() if s not in self._closed]
        if not open_highs:
            new = POS_INF if self._high else NEG_INF
        else:
            new = min(open_highs) - self.lateness_ms
        if new > self._value:
            self._value = new
        return self._value

    def observe(self, source: Hashable, ts: int) -> float:
        prev = self._high.get(source, NEG_INF)
        if ts > prev:
            self._high[source] = ts
        elif source not in self._high:
            self._high[source] = prev
        return self._recompute()

    def close(self, source: Hashable) -> float:
        self._high.setdefault(source, NEG_INF)
        self._closed.add(source)
        return self._recompute()

    def close_all(self) -> float:
        for s in list(self._high):
            self._closed.add(s)
        if not self._high:
            self._value = POS_INF
        return self._recompute()


# -- contextualisation ----------------------------------------------------


@dataclass
class VehicleTrackState:
    """Last emitted position per vehicle: ``vehicle_id -> (lat, lon, ts)``."""

    last: dict[str, tuple[float, float, int]] = field(default_factory=dict)

    def last_ts(self, vehicle_id: str) -> Optional[int]:
        prev = self.last.get(vehicle_id)
        return None if prev is None else prev[2]

    def label(self, t: CleanTuple, threshold_m: float = DEFAULT_STOP_THRESHOLD_M) -> ContextTuple:
        prev = self.last.get(t.vehicle_id)
        if prev is not None and t.ts <= prev[2]:
            raise ValueError(f"{t.vehicle_id}: ts {t.ts} not after previous {prev[2]}")
        self.last[t.vehicle_id] = (t.lat, t.lon, t.ts)
        if prev is None:
            return ContextTuple.from_clean(t, MotionLabel.MOVE, None)
        d = geo_distance((prev[0], prev[1]), (t.lat, t.lon))
        return ContextTuple.from_clean(t, MotionLabel.STOP if d < threshold_m else MotionLabel.MOVE, d)


def contextualize(
    stream: Iterable[CleanTuple],
    state: Optional[VehicleTrackState] = None,
    threshold_m: float = DEFAULT_STOP_THRESHOLD_M,
) -> list[ContextTuple]:
    """Label each tuple stop if it lies strictly under ``threshold_m`` from the
    vehicle's previous tuple, else move. A vehicle's first tuple is a move."""
    state = state if state is not None else VehicleTrackState()
    return [state.label(t, threshold_m) for t in stream]


# -- reordering -----------------------------------------------------------


class Reorderer:
    """Watermark-gated reorder buffer.

    ``push`` returns the tuples released by the watermark advance it caused,
    in ``(ts, vehicle_id)`` order. A tuple whose ts is already behind the
    watermark when it arrives is recorded as a late drop.
    """

    def __init__(self, lateness_bound_s: float = DEFAULT_LATENESS_S, sources: Iterable[Hashable] = ("main",)):
        self.watermark = Watermark(lateness_bound_s, sources)
        self.late: list[RejectRecord] = []
        self.watermarks: list[float] = []
        self._heap: list[tuple[int, str, int, CleanTuple]] = []
        self._last_ts: dict[str, int] = {}
        self.max_buffered = 0

    @property
    def buffered(self) -> int:
        return len(self._heap)

    def _late(self, t: CleanTuple) -> None:
        raw = RawTuple(t.route_id, t.route_number, t.vehicle_id, t.lat, t.lon, t.ts, t.extras, t.arrival_seq)
        self.late.append(RejectRecord(raw, RejectReason.LATE_DROP, Stage.FABRIC))

    def push(self, t: CleanTuple, source: Hashable = "main") -> list[CleanTuple]:
        if t.ts < self.watermark.current:
            self._late(t)
            # a late tuple still proves its source has progressed this far
            self.watermark.observe(source, t.ts)
            return []
        heapq.heappush(self._heap, (t.ts, t.vehicle_id, t.arrival_seq, t))
        if len(self._heap) > self.max_buffered:
            self.max_buffered = len(self._heap)
        return self._release(self.watermark.observe(source, t.ts))

    def close(self, source: Hashable = "main") -> list[CleanTuple]:
        return self._release(self.watermark.close(source))

    def flush(self) -> list[CleanTuple]:
        return self._release(self.watermark.close_all())

    def _release(self, wm: float) -> list[CleanTuple]:
        self.watermarks.append(wm)
        out = []
        heap = self._heap
        while heap and heap[0][0] <= wm:
            t = heapq.heappop(heap)[3]
            last = self._last_ts.get(t.vehicle_id)
            if last is not None and t.ts <= last:
                self._late(t)
                continue
            self._last_ts[t.vehicle_id] = t.ts
            out.append(t)
        return out


def reorder(
    stream: Iterable[CleanTuple], lateness_bound_s: float = DEFAULT_LATENESS_S
) -> tuple[list[CleanTuple], list[RejectRecord]]:
    """Reorder a single-source stream; returns ``(ordered, late_drops)``."""
    r = Reorderer(lateness_bound_s)
    out: list[CleanTuple] = []
    for t in stream:
        out.extend(r.push(t))
    out.extend(r.flush())
    return out, r.late


# -- batches --------------------------------------------------------------


@dataclass(frozen=True)
class Batch:
    batch_id: int
    hour_bucket: HourBucket
    tuples: tuple[ContextTuple, ...]
    closed: bool = True

    @property
    def label(self) -> str:
        return bucket_label(self.hour_bucket)

    @property
    def end_ms(self) -> int:
        """Last millisecond of the hour (inclusive)."""
        return bucket_start_ms(self.hour_bucket) + HOUR_MS - 1

    def header(self) -> str:
        return f"#batch {self.batch_id} {self.label}"

    def to_lines(self) -> list[str]:
        return [self.header()] + [serialize_tuple(t) for t in self.tuples]

    def save(self, path) -> None:
        write_lines(path, self.to_lines())

    @classmethod
    def from_lines(cls, lines: list[str]) -> "Batch":
        head = lines[0].split()
        if len(head) != 3 or head[0] != "#batch":
            raise ValueError(f"bad batch header {lines[0]!r}")
        bucket = parse_bucket_label(head[2])
        tuples = tuple(parse_context(line) for line in iter_lines(lines[1:]))
        return cls(int(head[1]), bucket, tuples, True)

    @classmethod
    def load(cls, path) -> "Batch":
        with open(path, encoding="utf-8") as fh:
            return cls.from_lines(fh.read().splitlines())


class BatchAssembler:
    """Retains context tuples per hour; closes an hour once the watermark is past it.

    Empty hours never produce a batch. Batch ids are assigned at close time,
    so they increase with the hour.
    """

    def __init__(self, first_batch_id: int = 1):
        self._open: dict[HourBucket, list[ContextTuple]] = {}
        self._next_id = first_batch_id
        self._closed_upto: float = NEG_INF

    @property
    def open_hours(self) -> list[HourBucket]:
        return sorted(self._open)

    def add(self, t: ContextTuple) -> None:
        b = hour_bucket(t.ts)
        if bucket_start_ms(b) + HOUR_MS - 1 < self._closed_upto:
            raise ValueError(f"tuple {t.key} belongs to already-closed hour {bucket_label(b)}")
        self._open.setdefault(b, []).append(t)

    def advance(self, watermark: float) -> list[Batch]:
        out = []
        for b in sorted(self._open):
            end = bucket_start_ms(b) + HOUR_MS - 1
            if watermark > end:
                tuples = sorted(self._open.pop(b), key=lambda t: (t.ts, t.vehicle_id))
                out.append(Batch(self._next_id, b, tuple(tuples), True))
                self._next_id += 1
            else:
                break
        if watermark > self._closed_upto:
            self._closed_upto = watermark
        return out

    def flush(self) -> list[Batch]:
        return self.advance(POS_INF)


def assemble_batches(stream: Iterable[ContextTuple], watermark: float) -> list[Batch]:
    """Bucket a contextualised stream and close every hour the watermark has passed."""
    asm = BatchAssembler()
    for t in stream:
        asm.add(t)
    return asm.advance(watermark)


# -- fabric ---------------------------------------------------------------


@dataclass
class FabricMetrics:
    tuples_in: int = 0
    tuples_out: int = 0
    late_drops: int = 0
    stops: int = 0
    moves: int = 0
    batches_closed: int = 0
    max_buffered: int = 0

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.__dict__.items())


class Fabric:
    """Reorder, contextualise and batch tuples arriving from several edge nodes."""

    def __init__(
        self,
        lateness_bound_s: float = DEFAULT_LATENESS_S,
        stop_threshold_m: float = DEFAULT_STOP_THRESHOLD_M,
        sources: Iterable[Hashable] = ("main",),
    ):
        if stop_threshold_m <= 0:
            raise ValueError("stop threshold must be positive")
        self.reorderer = Reorderer(lateness_bound_s, sources)
        self.tracks = VehicleTrackState()
        self.assembler = BatchAssembler()
        self.threshold = stop_threshold_m
        self.metrics = FabricMetrics()
        self.emitted: list[ContextTuple] = []
        self.keep_emitted = False

    @property
    def late(self) -> list[RejectRecord]:
        return self.reorderer.late

    def _emit(self, released: list[CleanTuple]) -> list[Batch]:
        m = self.metrics
        for t in released:
            ct = self.tracks.label(t, self.threshold)
            if ct.motion_label is MotionLabel.STOP:
                m.stops += 1
            else:
                m.moves += 1
            self.assembler.add(ct)
            if self.keep_emitted:
                self.emitted.append(ct)
        m.tuples_out += len(released)
        batches = self.assembler.advance(self.reorderer.watermark.current)
        m.batches_closed += len(batches)
        m.late_drops = len(self.reorderer.late)
        m.max_buffered = self.reorderer.max_buffered
        return batches

    def push(self, t: CleanTuple, source: Hashable = "main") -> list[Batch]:
        self.metrics.tuples_in += 1
        return self._emit(self.reorderer.push(t, source))

    def close_source(self, source: Hashable) -> list[Batch]:
        return self._emit(self.reorderer.close(source))

    def finish(self) -> list[Batch]:
        batches = self._emit(self.reorderer.flush())
        tail = self.assembler.flush()
        self.metrics.batches_closed += len(tail)
        return batches + tail


def run_fabric(
    stream: Iterable[CleanTuple],
    lateness_bound_s: float = DEFAULT_LATENESS_S,
    stop_threshold_m: float = DEFAULT_STOP_THRESHOLD_M,
) -> tuple[list[ContextTuple], list[Batch], Fabric]:
    """Single-source convenience: returns ``(emitted, batches, fabric)``."""
    fab = Fabric(lateness_bound_s, stop_threshold_m)
    fab.keep_emitted = True
    batches: list[Batch] = []
    for t in stream:
        batches += fab.push(t)
    batches += fab.finish()
    return fab.emitted, batches, fab


# -- downstream control ---------------------------------------------------


class RoutingError(LookupError):
    pass


BROADCAST = "*"


@dataclass(frozen=True)
class ControlMessage:
    kind: str  # query_result | config_update
    payload: str
    destination: str = BROADCAST

    KINDS = ("query_result", "config_update")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown control message kind {self.kind!r}")
        if "\n" in self.destination:
            raise ValueError("destination must be a single token")


@dataclass(frozen=True)
class Ack:
    destinations: tuple[str, ...]
    seqs: tuple[int, ...]


def encode_frame(msg: ControlMessage) -> bytes:
    """``<byte length>\\n<kind>\\n<destination>\\n<payload>``"""
    body = f"{msg.kind}\n{msg.destination}\n{msg.payload}".encode("utf-8")
    return str(len(body)).encode("ascii") + b"\n" + body


def decode_frames(data: bytes) -> list[ControlMessage]:
    out = []
    pos = 0
    while pos < len(data):
        nl = data.index(b"\n", pos)
        n = int(data[pos:nl])
        body = data[nl + 1 : nl + 1 + n]
        if len(body) != n:
            raise ValueError("truncated control frame")
        kind, dest, payload = body.decode("utf-8").split("\n", 2)
        out.append(ControlMessage(kind, payload, dest))
        pos = nl + 1 + n
    return out


class ControlChannel:
    """Fabric-to-edge message delivery with FIFO order per destination."""

    def __init__(self, destinations: Iterable[str] = ()):
        self._lock = threading.Lock()
        self._inbox: dict[str, deque[bytes]] = {}
        self._seq: dict[str, int] = {}
        for d in destinations:
            self.register(d)

    def register(self, node_id: str) -> None:
        if node_id == BROADCAST:
            raise ValueError("reserved destination name")
        with self._lock:
            self._inbox.setdefault(node_id, deque())
            self._seq.setdefault(node_id, 0)

    @property
    def destinations(self) -> list[str]:
        return sorted(self._inbox)

    def send_downstream(self, msg: ControlMessage) -> Ack:
        with self._lock:
            if msg.destination == BROADCAST:
                targets = sorted(self._inbox)
            elif msg.destination in self._inbox:
                targets = [msg.destination]
            else:
                raise RoutingError(f"unknown destination {msg.destination!r}")
            frame = encode_frame(msg)
            seqs = []
            for d in targets:
                self._inbox[d].append(frame)
                self._seq[d] += 1
                seqs.append(self._seq[d])
            return Ack(tuple(targets), tuple(seqs))

    def pending(self, node_id: str) -> int:
        return len(self._inbox[node_id])

    def receive(self, node_id: str) -> list[ControlMessage]:
        """Drain and decode everything queued for ``node_id``, oldest first."""
        with self._lock:
            if node_id not in self._inbox:
                raise RoutingError(f"unknown destination {node_id!r}")
            frames = b"".join(self._inbox[node_id])
            self._inbox[node_id].clear()
        return decode_frames(frames)
