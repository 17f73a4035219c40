"""Tuple records at each pipeline stage and the line-oriented wire format.

A feed line is ``route_id,route_number,vehicle_id,lat,lon,ts`` followed by
optional ``key=value`` extras. ``ts`` is epoch milliseconds. Empty numeric
columns parse as ``None`` so the cleaning stage can count them as missing
attributes; non-numeric text is a parse error.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, TextIO, Union

CORE_COLUMNS = ("route_id", "route_number", "vehicle_id", "lat", "lon", "ts")

Extras = tuple[tuple[str, str], ...]


class ParseError(ValueError):
    """A feed line could not be parsed. ``column`` names the offending column."""

    def __init__(self, message: str, column: str | None = None, line: str = ""):
        super().__init__(message)
        self.column = column
        self.line = line


class MotionLabel(str, enum.Enum):
    STOP = "stop"
    MOVE = "move"


class RejectReason(str, enum.Enum):
    DUPLICATE = "duplicate"
    MISSING_ATTRIBUTE = "missing_attribute"
    WRONG_VALUE = "wrong_value"
    LATE_DROP = "late_drop"


class Stage(str, enum.Enum):
    EDGE = "edge"
    FABRIC = "fabric"


@dataclass(frozen=True, slots=True)
class RawTuple:
    route_id: str
    route_number: str
    vehicle_id: str
    lat: Optional[float]
    lon: Optional[float]
    ts: Optional[int]
    extras: Extras = ()
    arrival_seq: int = 0

    @property
    def key(self) -> tuple[str, Optional[int]]:
        return (self.vehicle_id, self.ts)


@dataclass(frozen=True, slots=True)
class CleanTuple:
    route_id: str
    route_number: str
    vehicle_id: str
    lat: float
    lon: float
    ts: int
    extras: Extras = ()  # only attributes whitelisted by the cleaning schema
    arrival_seq: int = 0

    @property
    def key(self) -> tuple[str, int]:
        return (self.vehicle_id, self.ts)


@dataclass(frozen=True, slots=True)
class ContextTuple:
    route_id: str
    route_number: str
    vehicle_id: str
    lat: float
    lon: float
    ts: int
    motion_label: MotionLabel
    dist_prev_m: Optional[float] = None
    extras: Extras = ()
    arrival_seq: int = 0

    @property
    def key(self) -> tuple[str, int]:
        return (self.vehicle_id, self.ts)

    @classmethod
    def from_clean(
        cls, t: CleanTuple, label: MotionLabel, dist_prev_m: Optional[float]
    ) -> "ContextTuple":
        return cls(
            t.route_id,
            t.route_number,
            t.vehicle_id,
            t.lat,
            t.lon,
            t.ts,
            label,
            dist_prev_m,
            t.extras,
            t.arrival_seq,
        )


@dataclass(frozen=True, slots=True)
class RejectRecord:
    original: Optional[RawTuple]
    reason: RejectReason
    stage: Stage
    line: str = field(default="", compare=False)  # source text when parsing failed


AnyTuple = Union[RawTuple, CleanTuple, ContextTuple]


def _parse_float(text: str, column: str, line: str) -> Optional[float]:
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"non-numeric value {text!r} in column {column}", column, line) from None


def _parse_int(text: str, column: str, line: str) -> Optional[int]:
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"non-integer value {text!r} in column {column}", column, line) from None


def parse_tuple(line: str, arrival_seq: int = 0) -> RawTuple:
    """Parse one wire line into a :class:`RawTuple`.

    Columns after the six core ones become ``extras`` in input order. A column
    without ``=`` is kept as a key with an empty value.
    """
    text = line.rstrip("\r\n")
    cols = text.split(",")
    if len(cols) < 6:
        missing = CORE_COLUMNS[len(cols)] if cols != [""] else CORE_COLUMNS[0]
        raise ParseError(
            f"expected at least 6 core columns, got {len(cols) if text else 0}; missing {missing}",
            missing,
            text,
        )
    lat = _parse_float(cols[3], "lat", text)
    lon = _parse_float(cols[4], "lon", text)
    ts = _parse_int(cols[5], "ts", text)
    extras: Extras = ()
    if len(cols) > 6:
        pairs = []
        for item in cols[6:]:
            k, _, v = item.partition("=")
            pairs.append((k, v))
        extras = tuple(pairs)
    return RawTuple(cols[0], cols[1], cols[2], lat, lon, ts, extras, arrival_seq)


def _fmt_num(v) -> str:
    return "" if v is None else repr(v)


def serialize_tuple(t: AnyTuple) -> str:
    """Render a tuple as one wire line (no trailing newline).

    Context tuples append ``label=<stop|move>`` and, when a predecessor
    exists, ``dist=<meters>`` after any other extras.
    """
    parts = [
        t.route_id,
        t.route_number,
        t.vehicle_id,
        _fmt_num(t.lat),
        _fmt_num(t.lon),
        "" if t.ts is None else str(t.ts),
    ]
    for k, v in t.extras:
        parts.append(f"{k}={v}")
    if isinstance(t, ContextTuple):
        parts.append(f"label={t.motion_label.value}")
        if t.dist_prev_m is not None:
            parts.append(f"dist={t.dist_prev_m!r}")
    return ",".join(parts)


def parse_context(line: str, arrival_seq: int = 0) -> ContextTuple:
    """Parse a contextualised line back into a :class:`ContextTuple`.

    The trailing ``label``/``dist`` extras written by :func:`serialize_tuple`
    are lifted into their fields.
    """
    raw = parse_tuple(line, arrival_seq)
    if raw.lat is None or raw.lon is None or raw.ts is None:
        missing = "lat" if raw.lat is None else "lon" if raw.lon is None else "ts"
        raise ParseError(f"context tuple lacks {missing}", missing, line)
    label = None
    dist = None
    rest = []
    for k, v in raw.extras:
        if k == "label":
            try:
                label = MotionLabel(v)
            except ValueError:
                raise ParseError(f"bad motion label {v!r}", "label", line) from None
        elif k == "dist":
            dist = _parse_float(v, "dist", line)
        else:
            rest.append((k, v))
    if label is None:
        raise ParseError("context tuple lacks label", "label", line)
    return ContextTuple(
        raw.route_id,
        raw.route_number,
        raw.vehicle_id,
        raw.lat,
        raw.lon,
        raw.ts,
        label,
        dist,
        tuple(rest),
        arrival_seq,
    )


def iter_lines(source: Union[str, Path, TextIO, Iterable[str]]) -> Iterator[str]:
    """Yield data lines, skipping blank and ``#`` comment lines."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8", newline="\n") as fh:
            yield from iter_lines(fh)
        return
    for line in source:
        line = line.rstrip("\r\n")
        if not line or line.startswith("#"):
            continue
        yield line


def read_feed(source, start_seq: int = 0) -> list[RawTuple]:
    """Parse a whole feed, assigning ``arrival_seq`` in line order.

    Raises :class:`ParseError` on the first malformed line; the edge node has
    its own lenient reader that turns bad lines into rejects.
    """
    return [parse_tuple(line, start_seq + i) for i, line in enumerate(iter_lines(source))]


def write_lines(path: Union[str, Path], lines: Iterable[str], header: Iterable[str] = ()) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for h in header:
            fh.write(h + "\n")
        for line in lines:
            fh.write(line + "\n")
