"""Command-line interface.

Exit code contract for ``sentinel check``: 0 = clean, 2 = warn-level
findings, 3 = block-level findings. Other commands exit 0 on success and 1
on error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .cdi import CdiConfig, report_to_json
from .deviation import serialize_reports
from .graph import export_graph
from .harness import (
    SystemClock,
    Workspace,
    default_registry,
    load_replay_script,
    parse_clock_flag,
    replay,
)
from .pipeline import analyze_session, empty_seeds, session_cdi, verdict_json
from .seeds import SeedError, load_seeds, parse_seeds
from .store import default_data_dir
from .trace import TraceError, parse_stream_text, serialize_stream


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_trace(path: str):
    return parse_stream_text(_read(path))


def _load_seeds_arg(path: str | None):
    if path is None:
        return empty_seeds()
    return load_seeds(_read(path))


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        header, events = _load_trace(args.trace)
    except TraceError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    counts: dict[str, int] = {}
    for e in events:
        counts[e.kind] = counts.get(e.kind, 0) + 1
    print(f"ok: session {header.session_id}, {len(events)} events")
    for kind in sorted(counts):
        print(f"  {kind}: {counts[kind]}")
    return 0


def cmd_seeds_check(args: argparse.Namespace) -> int:
    try:
        doc = parse_seeds(_read(args.file))
    except SeedError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    print(f"ok: {len(doc.layers)} layers, {len(doc.rules)} rules")
    return 0


def cmd_check(args: argparse.Namespace) -> int:
    try:
        header, events = _load_trace(args.trace)
        seeds = _load_seeds_arg(args.seeds)
    except (TraceError, SeedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    analysis = analyze_session(header, events, seeds)
    text = serialize_reports(analysis.reports)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    for node_id in analysis.unanalyzable_nodes:
        print(f"warning: node {node_id} has an unanalyzable change payload", file=sys.stderr)
    print(
        f"{len(analysis.reports)} deviation(s), conformance: {analysis.conformance}",
        file=sys.stderr,
    )
    return {"clean": 0, "warn": 2, "block": 3}[analysis.conformance]


def cmd_graph(args: argparse.Namespace) -> int:
    try:
        header, events = _load_trace(args.trace)
        seeds = _load_seeds_arg(args.seeds)
    except (TraceError, SeedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    analysis = analyze_session(header, events, seeds)
    text = export_graph(analysis.graph, args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return 0


def cmd_cdi(args: argparse.Namespace) -> int:
    try:
        header, events = _load_trace(args.trace)
        seeds = _load_seeds_arg(args.seeds)
    except (TraceError, SeedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    config = CdiConfig(dwell_floor_ms=args.dwell_floor, cit_threshold=args.cit)
    analysis = analyze_session(header, events, seeds)
    report = session_cdi(analysis, args.quiz_seed, config)
    if args.out:
        Path(args.out).write_text(report_to_json(report) + "\n", encoding="utf-8")
    else:
        print(report_to_json(report))
    if args.verdict:
        print(verdict_json(analysis, report))
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    try:
        script = load_replay_script(_read(args.script))
        clock = parse_clock_flag(args.clock)
        workspace = Workspace(Path(args.workspace))
        header, events = replay(script, default_registry(), workspace, clock)
    except Exception as exc:  # replay surfaces many failure kinds; report and exit
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = serialize_stream(header, events)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {len(events) + 1} lines to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .api import create_app

    seeds_text = _read(args.seeds) if args.seeds else ""
    app = create_app(
        data_dir=args.data,
        seeds_text=seeds_text,
        token=args.token,
        ui_dir=args.ui_dir,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sentinel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a .satl trace stream")
    p.add_argument("--trace", required=True)
    p.set_defaults(fn=cmd_validate)

    seeds_p = sub.add_parser("seeds", help="seed document utilities")
    seeds_sub = seeds_p.add_subparsers(dest="seeds_command", required=True)
    p = seeds_sub.add_parser("check", help="validate a .seed document without evaluating it")
    p.add_argument("file")
    p.set_defaults(fn=cmd_seeds_check)

    p = sub.add_parser("check", help="detect deviations in a trace against seeds")
    p.add_argument("--seeds", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--out", help="write .devl reports here instead of stdout")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("graph", help="export the causal graph")
    p.add_argument("--trace", required=True)
    p.add_argument("--seeds", help="annotate nodes with layers/deviations")
    p.add_argument("--format", choices=("dot", "json"), default="dot")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_graph)

    p = sub.add_parser("cdi", help="compute the cognitive debt index for a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--seeds")
    p.add_argument("--quiz-seed", type=int, default=0)
    p.add_argument("--dwell-floor", type=int, default=5000, help="deliberation floor in ms")
    p.add_argument("--cit", type=float, default=0.5, help="alert threshold")
    p.add_argument("--verdict", action="store_true", help="also print the session verdict")
    p.add_argument("--out", help="write the .cdi record here instead of stdout")
    p.set_defaults(fn=cmd_cdi)

    p = sub.add_parser("replay", help="replay a script through the instrumented harness")
    p.add_argument("--script", required=True)
    p.add_argument("--workspace", required=True)
    p.add_argument("--clock", default="system", help="'system' or 'fixed:<epoch-ms>'")
    p.add_argument("--out", help="write the .satl stream here instead of stdout")
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8800)
    p.add_argument("--data", default=str(default_data_dir()), help="data dir (env SENTINEL_DATA)")
    p.add_argument("--seeds")
    p.add_argument("--token", help="require this static bearer token on /v1")
    p.add_argument("--ui-dir", help="serve a built review UI from this directory at /ui")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
