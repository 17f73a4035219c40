"""Command line entry point: ``generate``, ``run``, ``query`` and ``export``.

``run``, ``query`` and ``export`` read a flat ``key=value`` pipeline config
(``--config``, or the file named by ``$EDGECLOUD_CONFIG``); flags override it.
Every failure prints one ``edgecloud: error: ...`` line to stderr and exits
nonzero.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .fabric import parse_bucket_label
from .feedgen import (
    CADENCE_PRESETS,
    ConfigurationError,
    FaultProfile,
    NetworkSpec,
    emit_feed,
    generate_network,
    simulate_trips,
    write_outputs,
)
from .graph_cloud import (
    FORMATS,
    GraphStore,
    LookupFailure,
    RangeError,
    UsageError,
    degree,
    export_graph,
    pagerank,
    shortest_path,
)
from .pipeline import CONFIG_ENV, ConfigError, PipelineConfig, StageError, run_pipeline

PROG = "edgecloud"


class CliError(Exception):
    """Reported as a single diagnostic line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # one line instead of usage + message
        raise CliError(message)


def _cadence(text: str) -> float:
    if text in CADENCE_PRESETS:
        return CADENCE_PRESETS[text]
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad cadence {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog=PROG, description="Edge-to-cloud transit feed pipeline.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic feed, its ground truth and fault ledger")
    g.add_argument("--routes", type=int, default=30)
    g.add_argument("--stations", type=int, default=642)
    g.add_argument("--duration", type=float, default=3595.0, help="simulated seconds")
    g.add_argument("--cadence", type=_cadence, default=5.0, help="seconds, or one of 5s/30min/1day")
    g.add_argument("--dup", type=float, default=0.0)
    g.add_argument("--drop", type=float, default=0.0)
    g.add_argument("--corrupt", type=float, default=0.0)
    g.add_argument("--redundant", type=float, default=0.0)
    g.add_argument("--lateness", type=float, default=0.0, help="max arrival delay, seconds")
    g.add_argument("--isolated-drops", action="store_true")
    g.add_argument("--hubs", type=int, default=3)
    g.add_argument("--hub-ratio", type=float, default=3.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    def add_config(sp):
        sp.add_argument("--config", help=f"pipeline config (default: ${CONFIG_ENV})")
        sp.add_argument("--snapshots", help="snapshot directory")

    r = sub.add_parser("run", help="edge nodes -> fabric -> graph cloud")
    add_config(r)
    r.add_argument("--feed")
    r.add_argument("--network")
    r.add_argument("--reports")
    r.add_argument("--edge-nodes", type=int)
    r.add_argument("--lateness-bound", type=float)
    r.add_argument("--stop-threshold", type=float)
    r.add_argument("--station-radius", type=float)

    q = sub.add_parser("query", help="shortest-path, degree or pagerank over an hour range")
    q.add_argument("kind", choices=["shortest-path", "degree", "pagerank"])
    add_config(q)
    q.add_argument("--from", dest="from_", help="start hour (pagerank/degree) or source station (shortest-path)")
    q.add_argument("--to", help="end hour (pagerank/degree) or target station (shortest-path)")
    q.add_argument("--start", help="start hour, YYYY-MM-DDTHH (default: first snapshot)")
    q.add_argument("--end", help="end hour (default: last snapshot)")
    q.add_argument("--station")
    q.add_argument("--json", action="store_true", help="print a machine-readable record")

    e = sub.add_parser("export", help="write the graph of an hour range")
    add_config(e)
    e.add_argument("--from", dest="from_")
    e.add_argument("--to")
    e.add_argument("--format", default="edgelist")
    e.add_argument("--out", required=True)
    return p


def _load_config(args) -> PipelineConfig:
    path = args.config or os.environ.get(CONFIG_ENV)
    if path:
        if not Path(path).is_file():
            raise CliError(f"config file not found: {path}")
        cfg = PipelineConfig.load(path)
    else:
        cfg = PipelineConfig()
    overrides = {
        "feed": getattr(args, "feed", None),
        "network": getattr(args, "network", None),
        "snapshot_dir": args.snapshots,
        "report_dir": getattr(args, "reports", None),
        "edge_nodes": getattr(args, "edge_nodes", None),
        "lateness_bound": getattr(args, "lateness_bound", None),
        "stop_threshold": getattr(args, "stop_threshold", None),
        "station_radius": getattr(args, "station_radius", None),
    }
    for key, value in overrides.items():
        if value is None:
            continue
        # paths given on the command line are relative to the working directory
        if key in ("feed", "network", "snapshot_dir", "report_dir"):
            value = str(Path(value).resolve())
        setattr(cfg, key, value)
    cfg.validate()
    return cfg


def cmd_generate(args) -> int:
    spec = NetworkSpec(
        routes=args.routes, stations=args.stations, hubs=args.hubs, hub_ratio=args.hub_ratio, rng_seed=args.seed
    )
    faults = FaultProfile(
        duplicate_rate=args.dup,
        drop_rate=args.drop,
        corrupt_rate=args.corrupt,
        max_lateness=args.lateness,
        rng_seed=args.seed,
        redundant_rate=args.redundant,
        isolated_drops=args.isolated_drops,
    )
    faults.validate()
    network, truth = generate_network(spec)
    truth = simulate_trips(network, args.duration, args.cadence, truth=truth, seed=args.seed)
    feed = emit_feed(truth, faults)
    paths = write_outputs(args.out, network, truth, feed)
    cfg = PipelineConfig(
        expected_cadence=args.cadence,
        session_start=truth.start_ms,
        session_end=truth.end_ms,
        seed=args.seed,
    )
    cfg.save(paths["config"])
    print(f"wrote {len(feed.lines)} feed lines, {len(feed.ledger)} ledger entries to {args.out}")
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args)
    result = run_pipeline(cfg)
    print(result.summary())
    return 0


def _open_store(args) -> tuple[GraphStore, PipelineConfig]:
    cfg = _load_config(args)
    root = cfg.path("snapshot_dir")
    if not (root / "network.txt").is_file():
        raise CliError(f"no snapshot directory at {root}")
    return GraphStore.load(root, cfg.station_radius), cfg


def _hour(text: Optional[str], fallback):
    if text is None:
        return fallback
    try:
        return parse_bucket_label(text)
    except ValueError:
        raise CliError(f"bad hour {text!r}, expected YYYY-MM-DDTHH") from None


def _range(store: GraphStore, start: Optional[str], end: Optional[str]):
    hours = store.hours()
    first = hours[0] if hours else (1970, 1, 1, 0)
    last = hours[-1] if hours else first
    return _hour(start, first), _hour(end, last)


def cmd_query(args) -> int:
    store, cfg = _open_store(args)
    if args.kind == "shortest-path":
        a, b = args.from_, args.to
        if not a or not b:
            raise CliError("shortest-path needs --from STATION and --to STATION")
        start, end = _range(store, args.start, args.end)
        res = shortest_path(store, start, end, a, b)
    else:
        start, end = _range(store, args.start or args.from_, args.end or args.to)
        if args.kind == "degree":
            if not args.station:
                raise CliError("degree needs --station")
            res = degree(store, start, end, args.station)
        else:
            res = pagerank(store, start, end, cfg.damping, cfg.tol, cfg.max_iter)
    sys.stdout.write(res.to_json() + "\n" if args.json else res.to_table())
    return 0


def cmd_export(args) -> int:
    if args.format not in FORMATS:
        raise CliError(f"unknown format {args.format!r}; choose from {', '.join(FORMATS)}")
    store, _ = _open_store(args)
    start, end = _range(store, args.from_, args.to)
    written = export_graph(store.resolve_range(start, end), args.format, args.out)
    print("wrote " + " ".join(str(p) for p in written))
    return 0


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "query": cmd_query, "export": cmd_export}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except StageError as exc:
        msg = f"stage {exc}"
    except (CliError, ConfigError, ConfigurationError, UsageError, RangeError, ValueError, OSError) as exc:
        msg = str(exc)
    except LookupFailure as exc:
        msg = str(exc)
    msg = " ".join(msg.split())  # keep it to one line
    print(f"{PROG}: error: {msg}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
