"""Sensing-layer cleaning: the five checks a mobile fog node runs on its feed.

Per tuple, in order: missing-attribute check, wrong-value check, stripping of
non-schema attributes, duplicate removal on ``(vehicle_id, ts)``. Gaps in each
vehicle's cadence are reported once the stream ends; missing tuples are
counted, never synthesised.

Validity checks run before duplicate removal so that a corrupted retransmission
is counted as corrupt rather than as a duplicate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

from .feed_model import (
    CORE_COLUMNS,
    CleanTuple,
    ParseError,
    RawTuple,
    RejectReason,
    RejectRecord,
    Stage,
    iter_lines,
    parse_tuple,
)


@dataclass
class CleaningConfig:
    expected_cadence: float = 5.0  # seconds
    gap_factor: float = 1.5
    session_window: tuple[int, int] = (0, 2**62)  # inclusive, epoch ms
    known_routes: dict[str, str] = field(default_factory=dict)  # route_id -> route_number
    core_schema: tuple[str, ...] = CORE_COLUMNS

    def __post_init__(self) -> None:
        if self.gap_factor <= 1:
            raise ValueError("gap_factor must be > 1")
        if self.expected_cadence <= 0:
            raise ValueError("expected_cadence must be positive")
        lo, hi = self.session_window
        if not lo < hi:
            raise ValueError("session_window needs ts_min < ts_max")


@dataclass(frozen=True)
class GapEntry:
    vehicle_id: str
    gap_start_ts: int
    gap_end_ts: int
    estimated_missing: int


@dataclass
class CleaningReport:
    input_count: int = 0
    output_count: int = 0
    duplicates_removed: int = 0
    missing_attribute_rejects: int = 0
    redundant_attributes_stripped: int = 0
    wrong_value_rejects: int = 0
    gaps: list[GapEntry] = field(default_factory=list)

    @property
    def missing_gaps_detected(self) -> int:
        return len(self.gaps)

    @property
    def estimated_missing(self) -> int:
        return sum(g.estimated_missing for g in self.gaps)

    @property
    def rejected(self) -> int:
        return self.duplicates_removed + self.missing_attribute_rejects + self.wrong_value_rejects

    def balanced(self) -> bool:
        return self.input_count == self.output_count + self.rejected

    def to_text(self) -> str:
        """Flat ``key=value`` block; key names are stable."""
        rows = [
            ("input_count", self.input_count),
            ("output_count", self.output_count),
            ("missing_gaps_detected", self.missing_gaps_detected),
            ("estimated_missing", self.estimated_missing),
            ("duplicates_removed", self.duplicates_removed),
            ("missing_attribute_rejects", self.missing_attribute_rejects),
            ("redundant_attributes_stripped", self.redundant_attributes_stripped),
            ("wrong_value_rejects", self.wrong_value_rejects),
        ]
        lines = [f"{k}={v}" for k, v in rows]
        for g in self.gaps:
            lines.append(f"gap={g.vehicle_id}:{g.gap_start_ts}:{g.gap_end_ts}:{g.estimated_missing}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CleaningReport":
        rep = cls()
        for line in text.splitlines():
            if not line:
                continue
            k, _, v = line.partition("=")
            if k == "gap":
                vid, a, b, n = v.rsplit(":", 3)
                rep.gaps.append(GapEntry(vid, int(a), int(b), int(n)))
            elif k in ("missing_gaps_detected", "estimated_missing"):
                continue
            else:
                setattr(rep, k, int(v))
        return rep


def check_missing_attributes(
    t: RawTuple, cfg: CleaningConfig
) -> tuple[Optional[RawTuple], Optional[RejectRecord]]:
    """Reject on an absent core field; repair an absent route number from the route id."""
    if not t.route_id or not t.vehicle_id or t.lat is None or t.lon is None or t.ts is None:
        return None, RejectRecord(t, RejectReason.MISSING_ATTRIBUTE, Stage.EDGE)
    if not t.route_number:
        number = cfg.known_routes.get(t.route_id)
        if number is None:
            return None, RejectRecord(t, RejectReason.MISSING_ATTRIBUTE, Stage.EDGE)
        t = RawTuple(t.route_id, number, t.vehicle_id, t.lat, t.lon, t.ts, t.extras, t.arrival_seq)
    return t, None


def check_wrong_values(t: RawTuple, cfg: CleaningConfig) -> Optional[RejectRecord]:
    lo, hi = cfg.session_window
    # written so NaN fails every comparison and is rejected
    ok = (
        -90.0 <= t.lat <= 90.0
        and -180.0 <= t.lon <= 180.0
        and lo <= t.ts <= hi
        and t.route_id in cfg.known_routes
    )
    return None if ok else RejectRecord(t, RejectReason.WRONG_VALUE, Stage.EDGE)


def strip_redundant(t: RawTuple, cfg: CleaningConfig) -> tuple[RawTuple, int]:
    if not t.extras:
        return t, 0
    kept = tuple((k, v) for k, v in t.extras if k in cfg.core_schema)
    removed = len(t.extras) - len(kept)
    if removed:
        t = RawTuple(t.route_id, t.route_number, t.vehicle_id, t.lat, t.lon, t.ts, kept, t.arrival_seq)
    return t, removed


def dedupe(stream: Iterable[RawTuple], cfg: CleaningConfig | None = None):
    """Keep the first tuple per ``(vehicle_id, ts)`` by arrival order.

    Returns ``(kept, rejects)``; the removed count is ``len(rejects)``.
    """
    seen: set = set()
    kept, rejects = [], []
    for t in sorted(stream, key=lambda r: r.arrival_seq):
        if t.key in seen:
            rejects.append(RejectRecord(t, RejectReason.DUPLICATE, Stage.EDGE))
        else:
            seen.add(t.key)
            kept.append(t)
    return kept, rejects


def detect_missing(stream, cfg: CleaningConfig) -> list[GapEntry]:
    """Gap entries from per-vehicle timestamps.

    ``stream`` is either a mapping ``vehicle_id -> [ts, ...]`` or an iterable
    of tuples; timestamps are sorted per vehicle before comparison.
    """
    if isinstance(stream, dict):
        ts_by_vehicle = stream
    else:
        ts_by_vehicle = {}
        for t in stream:
            ts_by_vehicle.setdefault(t.vehicle_id, []).append(t.ts)
    cadence_ms = cfg.expected_cadence * 1000.0
    limit = cfg.gap_factor * cadence_ms
    gaps = []
    for vid in sorted(ts_by_vehicle):
        seq = sorted(ts_by_vehicle[vid])
        for a, b in zip(seq, seq[1:]):
            if b - a > limit:
                gaps.append(GapEntry(vid, a, b, int(round((b - a) / cadence_ms)) - 1))
    return gaps


class EdgeNode:
    """Sequential stream transformer for one fog node.

    Feed lines or raw tuples go in through :meth:`process_line` /
    :meth:`process`; :meth:`finish` runs gap detection and returns the report.
    """

    def __init__(self, cfg: CleaningConfig, node_id: str = "edge0"):
        self.cfg = cfg
        self.node_id = node_id
        self.report = CleaningReport()
        self.rejects: list[RejectRecord] = []
        self._seen: set[tuple[str, int]] = set()
        self._ts: dict[str, list[int]] = {}
        self._next_seq = 0
        self._finished = False

    def process_line(self, line: str, arrival_seq: Optional[int] = None) -> Optional[CleanTuple]:
        seq = self._next_seq if arrival_seq is None else arrival_seq
        self._next_seq = seq + 1
        try:
            raw = parse_tuple(line, seq)
        except ParseError as err:
            self.report.input_count += 1
            if err.column in ("lat", "lon", "ts"):
                reason = RejectReason.WRONG_VALUE
                self.report.wrong_value_rejects += 1
            else:
                reason = RejectReason.MISSING_ATTRIBUTE
                self.report.missing_attribute_rejects += 1
            self.rejects.append(RejectRecord(None, reason, Stage.EDGE, line))
            return None
        return self._clean(raw)

    def process(self, raw: RawTuple) -> Optional[CleanTuple]:
        self._next_seq = max(self._next_seq, raw.arrival_seq + 1)
        return self._clean(raw)

    def _clean(self, raw: RawTuple) -> Optional[CleanTuple]:
        rep = self.report
        rep.input_count += 1
        t, rej = check_missing_attributes(raw, self.cfg)
        if rej is not None:
            rep.missing_attribute_rejects += 1
            self.rejects.append(rej)
            return None
        rej = check_wrong_values(t, self.cfg)
        if rej is not None:
            rep.wrong_value_rejects += 1
            self.rejects.append(rej)
            return None
        t, stripped = strip_redundant(t, self.cfg)
        rep.redundant_attributes_stripped += stripped
        key = (t.vehicle_id, t.ts)
        if key in self._seen:
            rep.duplicates_removed += 1
            self.rejects.append(RejectRecord(t, RejectReason.DUPLICATE, Stage.EDGE))
            return None
        self._seen.add(key)
        self._ts.setdefault(t.vehicle_id, []).append(t.ts)
        rep.output_count += 1
        return CleanTuple(
            t.route_id, t.route_number, t.vehicle_id, t.lat, t.lon, t.ts, t.extras, t.arrival_seq
        )

    def finish(self) -> CleaningReport:
        if not self._finished:
            self.report.gaps = detect_missing(self._ts, self.cfg)
            self._finished = True
        return self.report

    def run(self, lines: Iterable[str]) -> Iterator[CleanTuple]:
        for line in lines:
            out = self.process_line(line)
            if out is not None:
                yield out
        self.finish()


def clean_stream(
    source, cfg: CleaningConfig
) -> tuple[list[CleanTuple], CleaningReport, list[RejectRecord]]:
    """Clean a feed (path, open file, or iterable of lines / raw tuples).

    Output keeps arrival order. Bad tuples are rejected and counted; only an
    unreadable source raises.
    """
    node = EdgeNode(cfg)
    out: list[CleanTuple] = []
    if isinstance(source, (list, tuple)) and source and isinstance(source[0], RawTuple):
        for raw in source:
            c = node.process(raw)
            if c is not None:
                out.append(c)
    else:
        for line in iter_lines(source):
            c = node.process_line(line)
            if c is not None:
                out.append(c)
    return out, node.finish(), node.rejects
