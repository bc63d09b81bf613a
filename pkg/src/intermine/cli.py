"""Command line front end: unify, extract, stats, export, synth."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from .conflict import ConflictParams, PathMode
from .errors import InterMineError, UnknownEventId
from .events import (
    DEFAULT_SEGMENT_FORMULA,
    PipelineParams,
    catalog_text,
    event_ids,
    export_event,
    extract_events,
    find_event,
    read_catalog,
)
from .msaa import MsaaParams
from .stats import histogram_csv, proportions, summarize, table_csv, table_text
from .synth import crossing_sweep, generate, spec_from_mapping
from .traj_model import read_scene_csv, write_scene_csv

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_IO = 2

log = logging.getLogger("intermine")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_IO, f"{self.prog}: error: {message}\n")


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("conflict detection")
    g.add_argument("--horizon", type=float, default=5.0, help="look-ahead horizon in seconds (5.0)")
    g.add_argument("--conf-time", type=float, default=3.0, help="arrival gap below which agents conflict, s (3.0)")
    g.add_argument("--buffer-floor", type=float, default=1.0, help="minimum buffer half-width, m (1.0)")
    g.add_argument("--path-mode", choices=[m.value for m in PathMode], default=PathMode.RECORDED_RETIMED.value)
    g.add_argument("--min-speed", type=float, default=0.1, help="agents slower than this are skipped, m/s (0.1)")
    g.add_argument("--include-non-vehicles", action="store_true", help="also scan pedestrians and cyclists")
    g = p.add_argument_group("intensity")
    g.add_argument("--tau-safe", type=float, default=3.0, help="required passage gap, s (3.0)")
    g.add_argument("--a-min", type=float, default=-8.0, help="lowest acceleration, m/s^2 (-8.0)")
    g.add_argument("--a-max", type=float, default=5.0, help="highest acceleration, m/s^2 (5.0)")
    g.add_argument("--infeasible-cap", type=float, default=10.0, help="intensity for infeasible steps (10.0)")
    g.add_argument("--exact-agent-limit", type=int, default=6, help="largest component solved exactly (6)")
    g = p.add_argument_group("segments")
    g.add_argument("--msaa-threshold", type=float, default=0.1, help="IntCheck threshold, m/s^2 (0.1)")
    g.add_argument("--gap-steps", type=int, default=3, help="false steps merged inside a segment (3)")
    g.add_argument("--segment-formula", default=DEFAULT_SEGMENT_FORMULA,
                   help="segment condition template over atom IntCheck; see docs/grammar.md")


def pipeline_params(args: argparse.Namespace) -> PipelineParams:
    return PipelineParams(
        conflict=ConflictParams(
            horizon_m=args.horizon, conf_time=args.conf_time, buffer_floor=args.buffer_floor,
            path_mode=args.path_mode, min_speed=args.min_speed,
            include_non_vehicles=args.include_non_vehicles,
        ),
        msaa=MsaaParams(
            tau_safe=args.tau_safe, a_min=args.a_min, a_max=args.a_max,
            infeasible_cap=args.infeasible_cap, exact_agent_limit=args.exact_agent_limit,
        ),
        msaa_threshold=args.msaa_threshold,
        gap_steps=args.gap_steps,
        segment_formula=args.segment_formula,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="intermine", description="Mine multi-agent driving interaction events.")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("unify", help="validate raw scene CSVs and write canonical ones")
    p.add_argument("input_dir", type=Path)
    p.add_argument("output_dir", type=Path)
    p.add_argument("--dt", type=float, help="step length in seconds when files lack a '# dt=' line")

    p = sub.add_parser("extract", help="extract interaction events into a catalog")
    p.add_argument("input", type=Path, help="scene CSV file or directory of them")
    p.add_argument("-o", "--output", type=Path, required=True, help="catalog path")
    p.add_argument("--json", action="store_true", help="write JSONL instead of CSV")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--export-dir", type=Path, help="also write per-event sidecar CSVs here")
    p.add_argument("--config", type=Path, help="key=value file with defaults for any flag")
    _add_pipeline_flags(p)

    p = sub.add_parser("stats", help="summarize a catalog")
    p.add_argument("catalog", type=Path)
    p.add_argument("--scene-count", type=int, help="number of scanned scenes, for proportions")
    p.add_argument("--out-dir", type=Path, help="write summary and histogram CSVs here")

    p = sub.add_parser("export", help="write one event's trajectories and traces")
    p.add_argument("catalog", type=Path)
    p.add_argument("event_id", help="<scene_id>/<k> or 0-based catalog row")
    p.add_argument("--scenes", type=Path, required=True, help="directory of canonical scene CSVs")
    p.add_argument("-o", "--out-dir", type=Path, required=True)
    p.add_argument("--config", type=Path, help="key=value file with defaults for any flag")
    _add_pipeline_flags(p)

    p = sub.add_parser("synth", help="write synthetic scene CSVs")
    p.add_argument("-o", "--out-dir", type=Path, required=True)
    p.add_argument("--spec", type=Path, help="key=value scenario file")
    p.add_argument("--kind")
    p.add_argument("--speeds")
    p.add_argument("--offsets", dest="arrival_offsets")
    p.add_argument("--angles", dest="approach_angles")
    p.add_argument("--dt")
    p.add_argument("--duration")
    p.add_argument("--seed")
    p.add_argument("--scene-id")
    p.add_argument("--random-crossings", type=int, metavar="N", help="write N random crossing scenes")
    return parser


def read_key_values(path: Path) -> dict[str, str]:
    out = {}
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InterMineError(f"{path}:{n}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    """Parse twice so a config file can supply defaults under explicit flags."""
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if path is None:
        return args
    try:
        values = read_key_values(path)
    except OSError as exc:
        parser.exit(EXIT_IO, f"intermine: cannot read config: {exc}\n")
    except InterMineError as exc:
        parser.exit(EXIT_IO, f"intermine: {exc}\n")
    sub = next(a for a in parser._subparsers._group_actions if a.dest == "command").choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        action = known.get(key)
        if action is None or key in ("config", "help"):
            parser.exit(EXIT_IO, f"intermine: unknown config key {key!r}\n")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes")
        else:
            try:
                defaults[key] = action.type(raw) if action.type else raw
            except ValueError:
                parser.exit(EXIT_IO, f"intermine: bad value for {key}: {raw!r}\n")
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


# --------------------------------------------------------------------------- commands

def _scene_files(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.suffix == ".csv" and p.is_file())
    return [path]


def cmd_unify(input_dir: Path, output_dir: Path, dt: Optional[float] = None) -> int:
    if not input_dir.is_dir():
        print(f"error: {input_dir} is not a directory", file=sys.stderr)
        return EXIT_IO
    files = _scene_files(input_dir)
    if not files:
        print(f"warning: no CSV files in {input_dir}", file=sys.stderr)
        return EXIT_OK
    output_dir.mkdir(parents=True, exist_ok=True)
    failed = []
    for f in files:
        try:
            scene = read_scene_csv(f, dt=dt)
        except (InterMineError, ValueError, KeyError) as exc:
            failed.append((f.name, str(exc)))
            continue
        write_scene_csv(scene, output_dir / f.name)
    for name, msg in failed:
        print(f"{name}: {msg}", file=sys.stderr)
    print(f"unified {len(files) - len(failed)} of {len(files)} files")
    return EXIT_DOMAIN if failed else EXIT_OK


def _extract_file(job):
    path, params = job
    try:
        scene = read_scene_csv(path)
    except OSError as exc:
        return path, None, None, f"cannot read: {exc}"
    except (InterMineError, ValueError, KeyError) as exc:
        return path, None, None, f"malformed scene: {exc}"
    try:
        return path, scene.scene_id, extract_events(scene, params), None
    except Exception as exc:  # a failing scene is skipped, not fatal
        return path, scene.scene_id, None, f"{type(exc).__name__}: {exc}"


def cmd_extract(args: argparse.Namespace) -> int:
    params = pipeline_params(args)
    if not args.input.exists():
        print(f"error: {args.input} does not exist", file=sys.stderr)
        return EXIT_IO
    files = _scene_files(args.input)
    jobs = [(f, params) for f in files]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_extract_file, jobs))
    else:
        results = [_extract_file(j) for j in jobs]

    catalog = []
    skipped = 0
    for path, scene_id, events, err in results:
        if err is not None:
            skipped += 1
            log.error("skipping %s: %s", path.name, err)
            print(f"{path.name}: skipped ({err})")
            continue
        print(f"{scene_id}: {len(events)} events")
        catalog.extend(events)
    catalog.sort(key=lambda e: e.scene_id)
    try:
        args.output.parent.mkdir(parents=True, exist_ok=True)
        args.output.write_text(catalog_text(catalog, args.json), encoding="utf-8", newline="\n")
        if args.export_dir is not None:
            _export_all(files, catalog, args.export_dir, params)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_DOMAIN if skipped else EXIT_OK


def _export_all(files: list[Path], catalog, out_dir: Path, params: PipelineParams) -> None:
    by_scene = {}
    for f in files:
        try:
            scene = read_scene_csv(f)
        except (InterMineError, ValueError, KeyError):
            continue
        by_scene[scene.scene_id] = scene
    for eid, event in zip(event_ids(catalog), catalog):
        prefix = eid.replace("/", "_")
        export_event(by_scene[event.scene_id], event, out_dir, prefix, params)


def cmd_stats(args: argparse.Namespace) -> int:
    try:
        catalog = read_catalog(args.catalog)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InterMineError, ValueError, KeyError) as exc:
        print(f"error: malformed catalog: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    summary = summarize(catalog)
    sys.stdout.write(table_text(catalog))
    print(f"two_agent_events={summary.n_two_agent} multi_agent_events={summary.n_multi_agent}")
    if args.scene_count is not None:
        try:
            two, multi = proportions(catalog, args.scene_count)
        except InterMineError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DOMAIN
        print(f"two_agent_fraction={two!r} multi_agent_fraction={multi!r}")
    if args.out_dir is not None:
        try:
            args.out_dir.mkdir(parents=True, exist_ok=True)
            (args.out_dir / "summary.csv").write_text(table_csv(catalog), encoding="utf-8", newline="\n")
            for name, h in summary.histograms.items():
                (args.out_dir / f"hist_{name}.csv").write_text(histogram_csv(h), encoding="utf-8", newline="\n")
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
    return EXIT_OK


def find_scene(scenes_dir: Path, scene_id: str):
    preferred = scenes_dir / f"{scene_id}.csv"
    candidates = [preferred] if preferred.is_file() else []
    candidates += [f for f in _scene_files(scenes_dir) if f != preferred]
    for f in candidates:
        try:
            scene = read_scene_csv(f)
        except (InterMineError, ValueError, KeyError):
            continue
        if scene.scene_id == scene_id:
            return scene
    return None


def cmd_export(args: argparse.Namespace) -> int:
    params = pipeline_params(args)
    try:
        catalog = read_catalog(args.catalog)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        event = find_event(catalog, args.event_id)
    except UnknownEventId as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    if not args.scenes.is_dir():
        print(f"error: {args.scenes} is not a directory", file=sys.stderr)
        return EXIT_IO
    scene = find_scene(args.scenes, event.scene_id)
    if scene is None:
        print(f"error: scene {event.scene_id!r} not found in {args.scenes}", file=sys.stderr)
        return EXIT_DOMAIN
    try:
        written = export_event(scene, event, args.out_dir, "event", params)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    for path in written:
        print(path)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    try:
        if args.random_crossings is not None:
            specs = crossing_sweep(args.random_crossings, seed=int(args.seed or 0))
        else:
            values = read_key_values(args.spec) if args.spec else {}
            for key in ("kind", "speeds", "arrival_offsets", "approach_angles", "dt", "duration", "seed", "scene_id"):
                if getattr(args, key) is not None:
                    values[key] = getattr(args, key)
            specs = [spec_from_mapping(values)]
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InterMineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    try:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        for spec in specs:
            path = args.out_dir / f"{spec.scene_id}.csv"
            write_scene_csv(generate(spec), path)
            print(path)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = _apply_config(parser, argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(message)s")
    if args.command == "unify":
        return cmd_unify(args.input_dir, args.output_dir, args.dt)
    if args.command == "synth":
        return cmd_synth(args)
    if args.command in ("extract", "export"):
        try:
            pipeline_params(args)
        except InterMineError as exc:
            parser.exit(EXIT_IO, f"intermine: invalid configuration: {exc}\n")
    if args.command == "extract":
        return cmd_extract(args)
    if args.command == "stats":
        return cmd_stats(args)
    return cmd_export(args)


if __name__ == "__main__":
    sys.exit(main())
