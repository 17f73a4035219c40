"""Synthetic transit network and replayable fault-injected feeds.

Routes are corridors across a bounding box. A few *hub* stations carry a
transfer-traffic weight a fixed ratio above the next rank (plain stations have
weight 1). A hub of weight ``w`` is served by ``w`` routes (capped at the route
count), and the per-pass dwell probability is set so that dwells per hour at a
station are proportional to its weight. That plants a known busiest-station
ranking in the data.

Vehicles advance a fixed straight-line distance per tick along their route
(out and back). Stepping by chord rather than by arc length keeps tick-to-tick
displacement constant through corners and route ends, so a constant-speed run
produces no accidental stop labels.
"""

from __future__ import annotations

import bisect
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .feed_model import (
    ContextTuple,
    MotionLabel,
    RawTuple,
    iter_lines,
    serialize_tuple,
    write_lines,
)
from .geo import LocalProjection
from .kernels import consecutive_distances

DEFAULT_BBOX = (46.05, -64.90, 46.15, -64.70)  # lat_min, lon_min, lat_max, lon_max
DEFAULT_START_MS = 1465387200000  # 2016-06-08T12:00:00Z
CADENCE_PRESETS = {"5s": 5.0, "30min": 1800.0, "1day": 86400.0}
STOP_THRESHOLD_M = 15.0
HUB_CLEARANCE_M = 150.0  # plain stations keep at least this far from any hub


class ConfigurationError(ValueError):
    pass


# -- network --------------------------------------------------------------


@dataclass
class NetworkSpec:
    routes: int = 30
    stations: int = 642
    bbox: tuple[float, float, float, float] = DEFAULT_BBOX
    headway_s: float = 600.0
    hubs: int = 3
    hub_ratio: float = 3.0
    rng_seed: int = 0

    def validate(self) -> None:
        if self.routes < 1 or self.stations < 1:
            raise ConfigurationError("routes and stations must be >= 1")
        if self.stations < 2 * self.routes:
            raise ConfigurationError(
                f"{self.stations} stations cannot give each of {self.routes} routes 2 stations"
            )
        lat_min, lon_min, lat_max, lon_max = self.bbox
        if not (lat_min < lat_max and lon_min < lon_max):
            raise ConfigurationError(f"degenerate bounding box {self.bbox}")
        if self.headway_s <= 0:
            raise ConfigurationError("headway must be positive")
        if self.hubs < 0 or self.hub_ratio < 1:
            raise ConfigurationError("hubs must be >= 0 and hub_ratio >= 1")


@dataclass(frozen=True)
class Station:
    station_id: str
    lat: float
    lon: float
    routes: tuple[str, ...]
    weight: float = 1.0


@dataclass(frozen=True)
class Route:
    route_id: str
    route_number: str
    stations: tuple[str, ...]
    headway_s: float


@dataclass
class Network:
    stations: dict[str, Station]
    routes: dict[str, Route]
    bbox: tuple[float, float, float, float] = DEFAULT_BBOX

    @property
    def route_numbers(self) -> dict[str, str]:
        return {r.route_id: r.route_number for r in self.routes.values()}

    def ranked_stations(self) -> list[str]:
        """Station ids by descending transfer weight, ties by id."""
        return sorted(self.stations, key=lambda s: (-self.stations[s].weight, s))

    def to_lines(self) -> list[str]:
        lines = [f"#bbox {' '.join(repr(v) for v in self.bbox)}"]
        for r in self.routes.values():
            lines.append(
                f"#route {r.route_id} {r.route_number} {r.headway_s!r} {';'.join(r.stations)}"
            )
        for s in self.stations.values():
            lines.append(f"{s.station_id},{s.lat!r},{s.lon!r},{';'.join(s.routes)},{s.weight!r}")
        return lines

    def save(self, path) -> None:
        write_lines(path, self.to_lines())

    @classmethod
    def load(cls, path) -> "Network":
        with open(path, encoding="utf-8") as fh:
            raw = fh.read().splitlines()
        bbox = DEFAULT_BBOX
        routes: dict[str, Route] = {}
        for line in raw:
            if line.startswith("#bbox "):
                bbox = tuple(float(v) for v in line.split()[1:5])
            elif line.startswith("#route "):
                _, rid, num, headway, seq = line.split(" ", 4)
                routes[rid] = Route(rid, num, tuple(seq.split(";")), float(headway))
        stations: dict[str, Station] = {}
        for line in iter_lines(raw):
            cols = line.split(",")
            if len(cols) < 4:
                raise ValueError(f"bad network line: {line!r}")
            weight = float(cols[4]) if len(cols) > 4 and cols[4] else 1.0
            memberships = tuple(c for c in cols[3].split(";") if c)
            stations[cols[0]] = Station(cols[0], float(cols[1]), float(cols[2]), memberships, weight)
        return cls(stations, routes, bbox)


def _cheapest_insertion(xy: list[tuple[float, float]], p: tuple[float, float]) -> int:
    """Interior index at which inserting ``p`` into the polyline adds least length.

    Ends are excluded so the inserted station is passed in both directions.
    """
    best, best_i = math.inf, 1
    for i in range(1, len(xy)):
        cost = math.dist(xy[i - 1], p) + math.dist(p, xy[i]) - math.dist(xy[i - 1], xy[i])
        if cost < best:
            best, best_i = cost, i
    return best_i


def generate_network(spec: NetworkSpec) -> tuple[Network, "GroundTruth"]:
    """Build a deterministic network and a ground-truth skeleton with weights."""
    spec.validate()
    rng = np.random.default_rng(spec.rng_seed)
    lat_min, lon_min, lat_max, lon_max = spec.bbox
    proj = LocalProjection((lat_min + lat_max) / 2.0, (lon_min + lon_max) / 2.0)
    x_lo, y_lo = proj.to_xy(lat_min, lon_min)
    x_hi, y_hi = proj.to_xy(lat_max, lon_max)
    width, height = x_hi - x_lo, y_hi - y_lo
    diag = math.hypot(width, height)

    n_hubs = min(spec.hubs, spec.stations - 2 * spec.routes)
    n_plain = spec.stations - n_hubs
    digits = max(3, len(str(spec.stations - 1)))
    sid = [f"S{i:0{digits}d}" for i in range(spec.stations)]
    # hub ids are scattered among the plain ones so rank is not readable from the id
    hub_slots = sorted(rng.choice(spec.stations, size=n_hubs, replace=False).tolist()) if n_hubs else []
    hub_ids = [sid[i] for i in hub_slots]
    rng.shuffle(hub_ids)
    plain_ids = [s for i, s in enumerate(sid) if i not in set(hub_slots)]

    def clip(x: float, y: float) -> tuple[float, float]:
        return min(max(x, x_lo), x_hi), min(max(y, y_lo), y_hi)

    coords: dict[str, tuple[float, float]] = {}
    for h in hub_ids:
        coords[h] = (
            x_lo + width * rng.uniform(0.25, 0.75),
            y_lo + height * rng.uniform(0.25, 0.75),
        )

    base, extra = divmod(n_plain, spec.routes)
    sequences: list[list[str]] = []
    cursor = 0
    for r in range(spec.routes):
        n_r = base + (1 if r < extra else 0)
        members = plain_ids[cursor : cursor + n_r]
        cursor += n_r
        # corridor between two random endpoints at least a third of the diagonal apart
        while True:
            ax, ay = x_lo + width * rng.random(), y_lo + height * rng.random()
            bx, by = x_lo + width * rng.random(), y_lo + height * rng.random()
            if math.hypot(bx - ax, by - ay) >= diag / 3.0:
                break
        length = math.hypot(bx - ax, by - ay)
        nx, ny = -(by - ay) / length, (bx - ax) / length
        for i, s in enumerate(members):
            f = (i + 0.5 + rng.uniform(-0.2, 0.2)) / n_r
            off = rng.normal(0.0, 150.0)
            x, y = clip(ax + f * (bx - ax) + off * nx, ay + f * (by - ay) + off * ny)
            for h in hub_ids:
                hx, hy = coords[h]
                gap = math.hypot(x - hx, y - hy)
                if gap < HUB_CLEARANCE_M:
                    # push radially out of the hub's catchment
                    ux, uy = ((x - hx) / gap, (y - hy) / gap) if gap > 0 else (1.0, 0.0)
                    x, y = hx + ux * HUB_CLEARANCE_M, hy + uy * HUB_CLEARANCE_M
            coords[s] = (x, y)
        sequences.append(list(members))

    weights = {s: 1.0 for s in sid}
    for rank, h in enumerate(hub_ids):
        weights[h] = float(spec.hub_ratio ** (n_hubs - rank))
    if hub_ids:
        for h in hub_ids:
            # weight counts the routes transferring at the station (a plain
            # station has one); the routes passing closest adopt the hub
            share = min(spec.routes, max(1, int(round(weights[h]))))
            costs = []
            for r, seq in enumerate(sequences):
                xy = [coords[s] for s in seq]
                i = _cheapest_insertion(xy, coords[h])
                extra_len = (
                    math.dist(xy[i - 1], coords[h]) + math.dist(coords[h], xy[i]) - math.dist(xy[i - 1], xy[i])
                )
                costs.append((extra_len, r, i))
            for _, r, i in sorted(costs)[:share]:
                sequences[r].insert(i, h)

    route_width = max(2, len(str(spec.routes - 1)))
    routes: dict[str, Route] = {}
    membership: dict[str, list[str]] = {s: [] for s in sid}
    for r, seq in enumerate(sequences):
        rid = f"r{r:0{route_width}d}"
        routes[rid] = Route(rid, str(r + 1), tuple(seq), spec.headway_s)
        for s in seq:
            if rid not in membership[s]:
                membership[s].append(rid)

    stations: dict[str, Station] = {}
    for s in sid:
        lat, lon = proj.to_latlon(*coords[s])
        lat = min(max(lat, lat_min), lat_max)
        lon = min(max(lon, lon_min), lon_max)
        stations[s] = Station(s, lat, lon, tuple(membership[s]), weights[s])

    network = Network(stations, routes, tuple(spec.bbox))
    truth = GroundTruth(weights=dict(weights), planted_ranking=list(hub_ids))
    return network, truth


# -- trips ----------------------------------------------------------------


@dataclass(frozen=True)
class DwellEvent:
    vehicle_id: str
    station_id: str
    start_ts: int  # ts of the first stationary tick
    ticks: int
    duration_s: float


@dataclass
class GroundTruth:
    weights: dict[str, float] = field(default_factory=dict)
    planted_ranking: list[str] = field(default_factory=list)  # heaviest hubs first
    trajectories: dict[str, list[ContextTuple]] = field(default_factory=dict)
    dwells: list[DwellEvent] = field(default_factory=list)
    start_ms: int = DEFAULT_START_MS
    end_ms: int = DEFAULT_START_MS
    cadence_s: float = 5.0

    @property
    def session_window(self) -> tuple[int, int]:
        return (self.start_ms, self.end_ms)

    def tuples(self) -> list[ContextTuple]:
        """All truth tuples in emission order: by ts, then vehicle id."""
        out = [t for traj in self.trajectories.values() for t in traj]
        out.sort(key=lambda t: (t.ts, t.vehicle_id))
        return out

    def label_counts(self) -> dict[str, int]:
        counts = {"stop": 0, "move": 0}
        for traj in self.trajectories.values():
            for t in traj:
                counts[t.motion_label.value] += 1
        return counts


class _Cycle:
    """Out-and-back traversal of a route polyline in local meters."""

    def __init__(self, pts: list[tuple[float, float]], station_ids: list[str]):
        seq = list(pts) + list(reversed(pts[:-1]))  # closes at pts[0]
        ids = list(station_ids) + list(reversed(station_ids[:-1]))
        self.pts = seq
        self.cum = [0.0]
        for i in range(1, len(seq)):
            self.cum.append(self.cum[-1] + math.dist(seq[i - 1], seq[i]))
        self.period = self.cum[-1]
        # station passes within one period; the closing point equals the start
        self.stops = [(self.cum[i], ids[i]) for i in range(len(seq) - 1)]
        self.stop_pos = [c for c, _ in self.stops]

    def point(self, a: float) -> tuple[float, float]:
        if self.period <= 0:
            return self.pts[0]
        a = a % self.period
        i = bisect.bisect_right(self.cum, a) - 1
        i = min(max(i, 0), len(self.pts) - 2)
        seg = self.cum[i + 1] - self.cum[i]
        u = 0.0 if seg <= 0 else (a - self.cum[i]) / seg
        (x0, y0), (x1, y1) = self.pts[i], self.pts[i + 1]
        return x0 + u * (x1 - x0), y0 + u * (y1 - y0)

    def chord_step(self, a: float, p: tuple[float, float], step: float) -> float:
        """Smallest arc position after ``a`` whose point is ``step`` meters from ``p``."""
        if self.period <= 0 or step <= 0:
            return a
        laps, r = divmod(a, self.period)
        i = min(max(bisect.bisect_right(self.cum, r) - 1, 0), len(self.pts) - 2)
        px, py = p
        s2 = step * step
        travelled = 0.0
        u0 = 0.0 if self.cum[i + 1] == self.cum[i] else (r - self.cum[i]) / (self.cum[i + 1] - self.cum[i])
        while travelled <= self.period + step:
            (x0, y0), (x1, y1) = self.pts[i], self.pts[i + 1]
            dx, dy = x1 - x0, y1 - y0
            seg = self.cum[i + 1] - self.cum[i]
            if seg > 0:
                fx, fy = x0 - px, y0 - py
                qa = dx * dx + dy * dy
                qb = 2.0 * (fx * dx + fy * dy)
                qc = fx * fx + fy * fy - s2
                disc = qb * qb - 4.0 * qa * qc
                if disc >= 0.0:
                    root = (-qb + math.sqrt(disc)) / (2.0 * qa)
                    if u0 <= root <= 1.0:
                        return laps * self.period + self.cum[i] + root * seg
                travelled += (1.0 - u0) * seg
            u0 = 0.0
            i += 1
            if i == len(self.pts) - 1:
                i = 0
                laps += 1
        # route too small to get `step` away from p: fall back to arc distance
        return a + step

    def stations_between(self, lo: float, hi: float) -> list[tuple[float, str]]:
        """Station passes with arc position in ``(lo, hi]``, in travel order."""
        out: list[tuple[float, str]] = []
        if self.period <= 0 or hi <= lo:
            return out
        laps, r = divmod(lo, self.period)
        j = bisect.bisect_right(self.stop_pos, r)
        while True:
            if j == len(self.stops):
                j = 0
                laps += 1
            pos = laps * self.period + self.stops[j][0]
            if pos > hi:
                return out
            if pos > lo:
                out.append((pos, self.stops[j][1]))
            j += 1


def simulate_trips(
    network: Network,
    duration: float,
    cadence: float,
    *,
    truth: Optional[GroundTruth] = None,
    speed_mps: float = 10.0,
    vehicles_per_route: Optional[int] = None,
    dwell_rate: float = 1.0,
    dwell_s: tuple[float, float] = (30.0, 60.0),
    jitter_m: float = 1.0,
    start_ms: int = DEFAULT_START_MS,
    stop_threshold_m: float = STOP_THRESHOLD_M,
    seed: int = 0,
) -> GroundTruth:
    """Simulate every vehicle and return labelled ideal trajectories.

    Each vehicle emits one tuple per tick at ``t = 0, cadence, ..., duration``.
    When a vehicle crosses a station it dwells there with probability
    proportional to ``weight / routes_serving``, scaled so the largest is
    ``dwell_rate``; a dwell of ``k`` ticks emits ``k``
    jittered copies of the halt position. ``vehicles_per_route`` defaults to
    enough vehicles to keep the route's headway over one round trip.
    """
    if duration <= 0 or cadence <= 0:
        raise ConfigurationError("duration and cadence must be positive")
    if vehicles_per_route is not None and vehicles_per_route < 1:
        raise ConfigurationError("vehicles_per_route must be >= 1")
    truth = truth if truth is not None else GroundTruth(weights={s: st.weight for s, st in network.stations.items()})
    if not truth.weights:
        truth.weights = {s: st.weight for s, st in network.stations.items()}
    rng = np.random.default_rng(seed)
    lat_min, lon_min, lat_max, lon_max = network.bbox
    proj = LocalProjection((lat_min + lat_max) / 2.0, (lon_min + lon_max) / 2.0)

    # every serving route passes a station at the same rate, so dividing the
    # weight by the route count makes dwells per hour proportional to weight
    served = {s: max(1, len(st.routes)) for s, st in network.stations.items()}
    per_pass = {s: w / served.get(s, 1) for s, w in truth.weights.items()}
    top = max(per_pass.values()) if per_pass else 1.0
    p_dwell = {s: min(1.0, dwell_rate * v / top) for s, v in per_pass.items()}
    n_ticks = int(math.floor(duration / cadence + 1e-9)) + 1
    cadence_ms = int(round(cadence * 1000))
    step = speed_mps * cadence
    arrive_min = max(20.0, stop_threshold_m * 4.0 / 3.0)
    jitter_cap = 3.0 * jitter_m

    truth.trajectories = {}
    truth.dwells = []
    truth.start_ms = start_ms
    truth.end_ms = start_ms + (n_ticks - 1) * cadence_ms
    truth.cadence_s = cadence

    for route in network.routes.values():
        pts = [proj.to_xy(network.stations[s].lat, network.stations[s].lon) for s in route.stations]
        cycle = _Cycle(pts, list(route.stations))
        n_veh = vehicles_per_route
        if n_veh is None:
            n_veh = max(1, math.ceil(cycle.period / (route.headway_s * speed_mps)))
        for k in range(n_veh):
            vid = f"bus-{route.route_id}-{k}"
            a = cycle.period * k / n_veh
            p = cycle.point(a)
            emit = p
            skip = -math.inf
            dwell_left = 0
            xs = np.empty(n_ticks)
            ys = np.empty(n_ticks)
            for i in range(n_ticks):
                xs[i], ys[i] = emit
                if dwell_left > 0:
                    dwell_left -= 1
                    jx, jy = np.clip(rng.normal(0.0, jitter_m, 2), -jitter_cap, jitter_cap)
                    emit = (p[0] + jx, p[1] + jy)
                    continue
                nxt = cycle.chord_step(a, p, step)
                hit = None
                for c, station in cycle.stations_between(max(a, skip), nxt):
                    if rng.random() < p_dwell.get(station, 0.0):
                        hit = (c, station)
                        break
                if hit is not None:
                    c, station = hit
                    ticks = max(1, int(round(rng.uniform(*dwell_s) / cadence)))
                    skip = c
                    station_pt = cycle.point(c)
                    if math.dist(p, station_pt) >= arrive_min:
                        # arrival tick at the station first, then `ticks` stationary ticks
                        a, p = c, station_pt
                        emit = p
                        dwell_left = ticks
                        first = i + 2
                    else:
                        # close enough already: halt here
                        jx, jy = np.clip(rng.normal(0.0, jitter_m, 2), -jitter_cap, jitter_cap)
                        emit = (p[0] + jx, p[1] + jy)
                        dwell_left = ticks - 1
                        first = i + 1
                    if first < n_ticks:
                        n = min(ticks, n_ticks - first)
                        truth.dwells.append(
                            DwellEvent(vid, station, start_ms + first * cadence_ms, n, n * cadence)
                        )
                else:
                    a, p = nxt, cycle.point(nxt)
                    emit = p
            truth.trajectories[vid] = _label(
                route, vid, xs, ys, proj, start_ms, cadence_ms, stop_threshold_m
            )
    return truth


def _label(route, vid, xs, ys, proj, start_ms, cadence_ms, threshold) -> list[ContextTuple]:
    lat = proj.lat0 + ys / 111320.0
    lon = proj.lon0 + xs / proj._kx
    d = consecutive_distances(lat, lon)
    out = []
    for i in range(lat.shape[0]):
        if i == 0:
            label, dist = MotionLabel.MOVE, None
        else:
            dist = float(d[i - 1])
            label = MotionLabel.STOP if dist < threshold else MotionLabel.MOVE
        out.append(
            ContextTuple(
                route.route_id,
                route.route_number,
                vid,
                float(lat[i]),
                float(lon[i]),
                start_ms + i * cadence_ms,
                label,
                dist,
            )
        )
    return out


# -- feed emission --------------------------------------------------------


@dataclass
class FaultProfile:
    duplicate_rate: float = 0.0
    drop_rate: float = 0.0
    corrupt_rate: float = 0.0
    max_lateness: float = 0.0  # seconds
    rng_seed: int = 0
    redundant_rate: float = 0.0  # chance a line carries an extra non-schema attribute
    isolated_drops: bool = False  # never drop two adjacent ticks, nor a vehicle's first/last tick

    def validate(self) -> None:
        for name in ("duplicate_rate", "drop_rate", "corrupt_rate", "redundant_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must be in [0, 1], got {v}")
        if self.max_lateness < 0:
            raise ConfigurationError("max_lateness must be >= 0")


@dataclass(frozen=True)
class FaultEntry:
    kind: str  # drop | duplicate | corrupt | late | redundant
    vehicle_id: str
    ts: int
    detail: str = ""

    def to_line(self) -> str:
        return f"{self.kind},{self.vehicle_id},{self.ts},{self.detail}"

    @classmethod
    def from_line(cls, line: str) -> "FaultEntry":
        kind, vid, ts, detail = line.split(",", 3)
        return cls(kind, vid, int(ts), detail)


@dataclass
class Feed:
    lines: list[str]
    ledger: list[FaultEntry]

    def count(self, kind: str) -> int:
        return sum(1 for e in self.ledger if e.kind == kind)


_CORRUPTIONS = (
    ("route_id", "missing"),
    ("route_id", "wrong"),
    ("vehicle_id", "missing"),
    ("lat", "missing"),
    ("lat", "wrong"),
    ("lon", "missing"),
    ("lon", "wrong"),
    ("ts", "missing"),
    ("ts", "wrong"),
)

_REDUNDANT_KEYS = ("door", "odometer", "driver", "temp")


def _corrupt(t: RawTuple, rng: random.Random, window: tuple[int, int]) -> tuple[RawTuple, str]:
    col, kind = _CORRUPTIONS[rng.randrange(len(_CORRUPTIONS))]
    if kind == "missing":
        value = None if col in ("lat", "lon", "ts") else ""
    elif col == "route_id":
        value = "x" + t.route_id
    elif col == "lat":
        value = rng.choice((-1.0, 1.0)) * (90.0 + rng.uniform(0.5, 90.0))
    elif col == "lon":
        value = rng.choice((-1.0, 1.0)) * (180.0 + rng.uniform(0.5, 180.0))
    else:
        shift = rng.randint(3_600_000, 30 * 86_400_000)
        value = window[0] - shift if rng.random() < 0.5 else window[1] + shift
    fields = {
        "route_id": t.route_id,
        "route_number": t.route_number,
        "vehicle_id": t.vehicle_id,
        "lat": t.lat,
        "lon": t.lon,
        "ts": t.ts,
    }
    fields[col] = value
    return RawTuple(extras=t.extras, **fields), f"{col}:{kind}"


def emit_feed(truth: GroundTruth, faults: FaultProfile) -> Feed:
    """Apply faults to the truth tuples and return feed lines plus a fault ledger.

    Per tuple, in order: drop, duplicate, corrupt (each emitted copy
    independently), then an arrival delay drawn from ``[0, max_lateness]``.
    Delay reorders lines but never rewrites ``ts``.

    The ledger describes what reaches the edge node: one ``corrupt`` entry per
    corrupted line, and one ``duplicate`` entry per extra *valid* copy, since a
    corrupted copy is rejected as corrupt before duplicate detection sees it.
    """
    faults.validate()
    rng = random.Random(faults.rng_seed)
    window = truth.session_window
    max_late_ms = int(round(faults.max_lateness * 1000))
    ledger: list[FaultEntry] = []
    staged: list[tuple[int, int, str]] = []  # (arrival key, emission index, line)
    meta: list[tuple[str, int, int]] = []  # parallel to staged: (vehicle_id, ts, delay)

    last_tick = {vid: traj[-1].ts for vid, traj in truth.trajectories.items()}
    first_tick = {vid: traj[0].ts for vid, traj in truth.trajectories.items()}
    prev_dropped: dict[str, bool] = {}

    order = 0
    for ct in truth.tuples():
        vid = ct.vehicle_id
        if faults.drop_rate and rng.random() < faults.drop_rate:
            allowed = True
            if faults.isolated_drops:
                allowed = (
                    not prev_dropped.get(vid, False)
                    and ct.ts != first_tick[vid]
                    and ct.ts != last_tick[vid]
                )
            if allowed:
                prev_dropped[vid] = True
                ledger.append(FaultEntry("drop", vid, ct.ts))
                continue
        prev_dropped[vid] = False

        extras = ()
        if faults.redundant_rate and rng.random() < faults.redundant_rate:
            key = _REDUNDANT_KEYS[rng.randrange(len(_REDUNDANT_KEYS))]
            extras = ((key, str(rng.randrange(1000))),)
            ledger.append(FaultEntry("redundant", vid, ct.ts, key))
        base = RawTuple(ct.route_id, ct.route_number, vid, ct.lat, ct.lon, ct.ts, extras)

        copies = 2 if faults.duplicate_rate and rng.random() < faults.duplicate_rate else 1
        delay = rng.randint(0, max_late_ms) if max_late_ms else 0
        valid_seen = 0
        for _ in range(copies):
            t = base
            if faults.corrupt_rate and rng.random() < faults.corrupt_rate:
                t, detail = _corrupt(base, rng, window)
                ledger.append(FaultEntry("corrupt", vid, ct.ts, detail))
            else:
                valid_seen += 1
                if valid_seen > 1:
                    ledger.append(FaultEntry("duplicate", vid, ct.ts))
            staged.append((ct.ts + delay, order, serialize_tuple(t)))
            meta.append((vid, ct.ts, delay))
            order += 1

    perm = sorted(range(len(staged)), key=lambda j: (staged[j][0], staged[j][1]))
    lines = [staged[j][2] for j in perm]

    # a line is late if some line with a greater true ts arrived before it
    high = None
    for j in perm:
        vid, ts, delay = meta[j]
        if high is not None and ts < high:
            ledger.append(FaultEntry("late", vid, ts, str(delay)))
        high = ts if high is None else max(high, ts)
    return Feed(lines, ledger)


def feed_ts_order_lines(truth: GroundTruth) -> list[str]:
    """Truth serialised as plain feed lines (no labels), in emission order."""
    return [
        serialize_tuple(RawTuple(t.route_id, t.route_number, t.vehicle_id, t.lat, t.lon, t.ts))
        for t in truth.tuples()
    ]


# -- files ----------------------------------------------------------------


def write_outputs(out_dir, network: Network, truth: GroundTruth, feed: Feed) -> dict[str, Path]:
    """Write feed, truth, ledger, network, dwell list and a ready-to-run config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "feed": out / "feed.txt",
        "truth": out / "truth.txt",
        "ledger": out / "ledger.txt",
        "network": out / "network.txt",
        "dwells": out / "dwells.txt",
        "config": out / "pipeline.cfg",
    }
    write_lines(paths["feed"], feed.lines)
    write_lines(paths["truth"], (serialize_tuple(t) for t in truth.tuples()))
    write_lines(paths["ledger"], (e.to_line() for e in feed.ledger), header=["# kind,vehicle_id,ts,detail"])
    network.save(paths["network"])
    write_lines(
        paths["dwells"],
        (f"{d.vehicle_id},{d.station_id},{d.start_ts},{d.ticks},{d.duration_s!r}" for d in truth.dwells),
        header=["# vehicle_id,station_id,start_ts,ticks,duration_s"],
    )
    write_lines(
        paths["config"],
        [
            "feed=feed.txt",
            "network=network.txt",
            f"session_start={truth.start_ms}",
            f"session_end={truth.end_ms}",
            f"expected_cadence={truth.cadence_s!r}",
        ],
    )
    return paths


def read_ledger(path) -> list[FaultEntry]:
    return [FaultEntry.from_line(line) for line in iter_lines(path)]


def read_dwells(path) -> list[DwellEvent]:
    out = []
    for line in iter_lines(path):
        vid, sid, ts, ticks, dur = line.split(",")
        out.append(DwellEvent(vid, sid, int(ts), int(ticks), float(dur)))
    return out
