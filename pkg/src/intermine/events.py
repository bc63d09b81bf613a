"""Per-step scanning, segment cutting and interaction event assembly."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import mtl
from .conflict import (
    ChainComponent,
    ConflictPair,
    ConflictParams,
    FuturePath,
    _UnionFind,
    build_components,
    future_path,
)
from .errors import InterMineError, UnknownEventId
from .msaa import AgentConflictState, MsaaParams, intensity_at
from .traj_model import AgentTrack, AgentType, Scene, write_scene_csv

INT_CHECK = "IntCheck"

# Placeholders: {last} = L-1, {hold} = max(0, L-1-gap), {gap} = min(gap, L-1)
# for a segment of L steps starting at the evaluation step.
DEFAULT_SEGMENT_FORMULA = (
    "IntCheck & G[{last},{last}](IntCheck) & G[0,{hold}](F[0,{gap}](IntCheck))"
)

def segment_condition(length: int, gap_steps: int, template: str = DEFAULT_SEGMENT_FORMULA) -> mtl.Formula:
    """The segment formula instantiated for a segment of ``length`` steps."""
    last = length - 1
    try:
        text = template.format(last=last, hold=max(0, last - gap_steps), gap=min(gap_steps, last))
    except (KeyError, IndexError, ValueError) as exc:
        raise InterMineError(f"bad segment formula template: {exc}") from exc
    return mtl.parse(text)


CATALOG_COLUMNS = (
    "scene_id", "dataset_tag", "agent_ids", "start_step", "end_step", "duration_s",
    "intensity_max", "intensity_mean", "min_pet", "n_agents", "has_av",
    "agent_types", "conflict_types",
)


class ConflictType(str, Enum):
    CROSSING = "crossing"
    MERGING = "merging"
    HEAD_ON = "head_on"


@dataclass(frozen=True)
class PipelineParams:
    conflict: ConflictParams = ConflictParams()
    msaa: MsaaParams = MsaaParams()
    msaa_threshold: float = 0.1     # m/s^2; IntCheck is MSAA > threshold
    gap_steps: int = 3
    segment_formula: str = DEFAULT_SEGMENT_FORMULA

    def __post_init__(self):
        if self.gap_steps < 0:
            raise InterMineError("gap_steps must be >= 0")
        if self.msaa_threshold < 0:
            raise InterMineError("msaa_threshold must be >= 0")
        # Fail early on a malformed template.
        segment_condition(1, self.gap_steps, self.segment_formula)


@dataclass(frozen=True)
class StepRecord:
    step: int
    components: tuple[ChainComponent, ...]
    intensities: Mapping[ChainComponent, tuple[float, tuple[str, ...]]]
    conflict_types: Mapping[tuple[str, str], ConflictType] = field(default_factory=dict)

    def __post_init__(self):
        seen: set[str] = set()
        for comp in self.components:
            if seen & set(comp.agent_ids):
                raise InterMineError(f"step {self.step}: components share agents")
            seen |= set(comp.agent_ids)


@dataclass(frozen=True)
class PetResult:
    pet: float
    overlap: bool
    first_id: str
    second_id: str


@dataclass(frozen=True)
class InteractionEvent:
    scene_id: str
    dataset_tag: str
    agent_ids: tuple[str, ...]
    start_step: int
    end_step: int
    duration_s: float
    intensity_max: float
    intensity_mean: float
    min_pet: Optional[float]
    n_agents: int
    has_av: bool
    agent_types: tuple[tuple[str, int], ...]
    conflict_types: tuple[str, ...]
    # Not part of the catalog row.
    pet_overlap: bool = False
    step_intensity: tuple[float, ...] = ()
    step_key_agents: tuple[tuple[str, ...], ...] = ()

    def __post_init__(self):
        if self.start_step > self.end_step:
            raise InterMineError("start_step > end_step")
        if self.n_agents != len(self.agent_ids) or self.n_agents < 2:
            raise InterMineError("n_agents must equal len(agent_ids) and be >= 2")

    @property
    def is_multi_agent(self) -> bool:
        return self.n_agents >= 3


# --------------------------------------------------------------------------- scanning

def _eligible(track: AgentTrack, params: ConflictParams) -> bool:
    return params.include_non_vehicles or track.agent_type is AgentType.VEHICLE


def conflict_states(component: ChainComponent, paths: Mapping[str, FuturePath]) -> list[AgentConflictState]:
    """Speeds and distances to each conflict point for the agents of a component."""
    dists: dict[str, dict] = {tid: {} for tid in component.agent_ids}
    for pair in component.pairs:
        for tid in pair.key:
            dists[tid][pair.key] = pair.time_of(tid) * paths[tid].assumed_speed
    return [AgentConflictState(tid, paths[tid].assumed_speed, dists[tid]) for tid in component.agent_ids]


def classify_conflict(pair: ConflictPair, fa: FuturePath, fb: FuturePath) -> ConflictType:
    """Crossing, merging or head-on from the angle between path tangents at the point."""
    ta = fa.path.direction_at(pair.time_of(fa.track_id) * fa.assumed_speed) or _unit(fa.heading)
    tb = fb.path.direction_at(pair.time_of(fb.track_id) * fb.assumed_speed) or _unit(fb.heading)
    cos = max(-1.0, min(1.0, ta[0] * tb[0] + ta[1] * tb[1]))
    theta = math.degrees(math.acos(cos))
    if theta < 45.0:
        return ConflictType.MERGING
    if theta > 135.0:
        return ConflictType.HEAD_ON
    return ConflictType.CROSSING


def _unit(heading: float) -> tuple[float, float]:
    return (math.cos(heading), math.sin(heading))


def scan_step(scene: Scene, step: int, params: PipelineParams = PipelineParams()) -> StepRecord:
    cp = params.conflict
    paths = {}
    for tid in sorted(scene.tracks):
        track = scene.tracks[tid]
        if not track.has_step(step) or not _eligible(track, cp):
            continue
        if (track.state_at(step).speed or 0.0) < cp.min_speed:
            continue
        paths[tid] = future_path(track, step, cp.horizon_m, cp.path_mode)
    comps = build_components(list(paths.values()), cp)
    intensities = {}
    types = {}
    for comp in comps:
        intensities[comp] = intensity_at(comp, conflict_states(comp, paths), params.msaa)
        for pair in comp.pairs:
            types[pair.key] = classify_conflict(pair, paths[pair.id_a], paths[pair.id_b])
    return StepRecord(step, tuple(comps), intensities, types)


def scan_scene(scene: Scene, params: PipelineParams = PipelineParams()) -> list[StepRecord]:
    """One StepRecord per scene step, in step order."""
    return [scan_step(scene, step, params) for step in scene.steps]


# ---------------------------------------------------------------------------- segments

def cut_segments(int_check: mtl.BoolTrace, gap_steps: int = 3) -> list[tuple[int, int]]:
    """Maximal true runs, merged across false gaps of at most ``gap_steps`` steps."""
    if gap_steps < 0:
        raise InterMineError("gap_steps must be >= 0")
    runs = []
    start = None
    for k, v in enumerate(int_check.values):
        step = int_check.offset + k
        if v and start is None:
            start = step
        elif not v and start is not None:
            runs.append([start, step - 1])
            start = None
    if start is not None:
        runs.append([start, int_check.end])
    merged: list[list[int]] = []
    for run in runs:
        if merged and run[0] - merged[-1][1] - 1 <= gap_steps:
            merged[-1][1] = run[1]
        else:
            merged.append(run)
    return [(a, b) for a, b in merged]


def verify_segment(int_check: mtl.BoolTrace, start: int, end: int, gap_steps: int,
                   template: str = DEFAULT_SEGMENT_FORMULA) -> bool:
    f = segment_condition(end - start + 1, gap_steps, template)
    result = mtl.eval_at(f, {INT_CHECK: int_check}, start)
    return result is not mtl.OUT_OF_WINDOW and bool(result)


# --------------------------------------------------------------------------------- PET

def _crossings(p0: np.ndarray, p1: np.ndarray, center: np.ndarray, r: float) -> Optional[tuple[float, float]]:
    """Parameters in [0, 1] where segment p0->p1 meets the circle, as (first, last)."""
    d = p1 - p0
    f = p0 - center
    a = float(d @ d)
    b = 2.0 * float(f @ d)
    c = float(f @ f) - r * r
    if a == 0.0:
        return None
    disc = b * b - 4 * a * c
    if disc < 0:
        return None
    sq = math.sqrt(disc)
    return ((-b - sq) / (2 * a), (-b + sq) / (2 * a))


def zone_occupancy(track: AgentTrack, center, radius: float, dt: float) -> Optional[tuple[float, float]]:
    """(entry, exit) times of the track centre in the disc, interpolated linearly."""
    xy = np.array([(s.x, s.y) for s in track.states])
    c = np.asarray(center, dtype=float)
    inside = np.hypot(xy[:, 0] - c[0], xy[:, 1] - c[1]) <= radius
    idx = np.nonzero(inside)[0]
    if len(idx) == 0:
        return None
    first, last = int(idx[0]), int(idx[-1])
    t_in = float(track.states[first].step)
    if first > 0:
        roots = _crossings(xy[first - 1], xy[first], c, radius)
        if roots is not None:
            t_in = track.states[first - 1].step + min(max(roots[0], 0.0), 1.0)
    t_out = float(track.states[last].step)
    if last < len(xy) - 1:
        roots = _crossings(xy[last], xy[last + 1], c, radius)
        if roots is not None:
            t_out = track.states[last].step + min(max(roots[1], 0.0), 1.0)
    return t_in * dt, t_out * dt


def pet_from_occupancy(occ_a: tuple[float, float], occ_b: tuple[float, float],
                       id_a: str = "a", id_b: str = "b") -> PetResult:
    """PET from two occupancy windows; overlapping windows give 0 with the flag set."""
    (first, occ1), (second, occ2) = sorted(((id_a, occ_a), (id_b, occ_b)), key=lambda x: (x[1], x[0]))
    gap = occ2[0] - occ1[1]
    if gap <= 0:
        return PetResult(0.0, True, first, second)
    return PetResult(gap, False, first, second)


def compute_pet(track_a: AgentTrack, track_b: AgentTrack, pair: ConflictPair, n: float,
                dt: float) -> Optional[PetResult]:
    """Post-encroachment time at the pair's conflict point; None if either never enters."""
    if {track_a.track_id, track_b.track_id} != set(pair.key):
        raise InterMineError(f"pair {pair.key} does not match the tracks")
    occ = []
    for track in (track_a, track_b):
        length = track.states[0].length
        window = zone_occupancy(track, pair.point, n + length / 2.0, dt)
        if window is None:
            return None
        occ.append(window)
    return pet_from_occupancy(occ[0], occ[1], track_a.track_id, track_b.track_id)


# ---------------------------------------------------------------------------- assembly

def event_threads(records: Sequence[StepRecord], link_steps: int = 1) -> list[list[tuple[int, ChainComponent]]]:
    """Group per-step components into threads of agent overlap.

    A component joins the latest component of each of its agents seen at most
    ``link_steps`` steps earlier.
    """
    nodes = []
    for rec in records:
        for comp in rec.components:
            nodes.append((rec.step, comp))
    uf = _UnionFind(range(len(nodes)))
    last_seen: dict[str, tuple[int, int]] = {}
    for k, (step, comp) in enumerate(nodes):
        for tid in comp.agent_ids:
            prev = last_seen.get(tid)
            if prev is not None and 0 < step - prev[0] <= link_steps:
                uf.union(prev[1], k)
        for tid in comp.agent_ids:
            last_seen[tid] = (step, k)
    groups: dict[int, list[int]] = {}
    for k in range(len(nodes)):
        groups.setdefault(uf.find(k), []).append(k)
    threads = [[nodes[k] for k in sorted(members)] for members in groups.values()]
    threads.sort(key=lambda t: (t[0][0], t[0][1].agent_ids))
    return threads


def thread_trace(thread, records: Sequence[StepRecord]) -> tuple[int, np.ndarray, dict]:
    """(first step, summed MSAA per step, key agents per step) for one thread."""
    by_step = {rec.step: rec for rec in records}
    first = thread[0][0]
    last = max(step for step, _ in thread)
    values = np.zeros(last - first + 1)
    keys: dict[int, tuple[str, ...]] = {}
    for step, comp in thread:
        value, key_agents = by_step[step].intensities[comp]
        values[step - first] += value
        keys[step] = tuple(sorted(set(keys.get(step, ())) | set(key_agents)))
    return first, values, keys


def assemble_events(scene: Scene, records: Sequence[StepRecord],
                    params: PipelineParams = PipelineParams()) -> list[InteractionEvent]:
    by_step = {rec.step: rec for rec in records}
    events = []
    for thread in event_threads(records, params.gap_steps + 1):
        first, values, keys = thread_trace(thread, records)
        trace = mtl.BoolTrace(INT_CHECK, tuple((values > params.msaa_threshold).tolist()), first)
        for start, end in cut_segments(trace, params.gap_steps):
            if not verify_segment(trace, start, end, params.gap_steps, params.segment_formula):
                raise InterMineError(
                    f"scene {scene.scene_id}: segment [{start}, {end}] fails the segment condition"
                )
            span = [(s, c) for s, c in thread if start <= s <= end]
            events.append(_make_event(scene, span, by_step, values[start - first:end - first + 1],
                                      [keys.get(s, ()) for s in range(start, end + 1)], start, end))
    events.sort(key=lambda e: (e.start_step, e.end_step, e.agent_ids))
    return events


def _make_event(scene: Scene, span, by_step, values: np.ndarray, key_trace, start: int, end: int) -> InteractionEvent:
    agents = sorted({tid for _, comp in span for tid in comp.agent_ids})
    pets = []
    types = set()
    seen_points = set()
    for step, comp in span:
        for pair in comp.pairs:
            types.add(by_step[step].conflict_types[pair.key].value)
            mark = (pair.key, round(pair.point[0], 6), round(pair.point[1], 6), pair.buffer_n)
            if mark in seen_points:
                continue
            seen_points.add(mark)
            res = compute_pet(scene.tracks[pair.id_a], scene.tracks[pair.id_b], pair, pair.buffer_n, scene.dt)
            if res is not None:
                pets.append(res)
    min_pet = min((p.pet for p in pets), default=None)
    overlap = any(p.overlap for p in pets)
    counts = Counter(scene.tracks[t].agent_type.value for t in agents)
    return InteractionEvent(
        scene_id=scene.scene_id,
        dataset_tag=scene.dataset_tag,
        agent_ids=tuple(agents),
        start_step=start,
        end_step=end,
        duration_s=round((end - start + 1) * scene.dt, 9),
        intensity_max=float(values.max()),
        intensity_mean=float(values.mean()),
        min_pet=min_pet,
        n_agents=len(agents),
        has_av=any(scene.tracks[t].is_ego for t in agents),
        agent_types=tuple(sorted(counts.items())),
        conflict_types=tuple(sorted(types)),
        pet_overlap=overlap,
        step_intensity=tuple(float(v) for v in values),
        step_key_agents=tuple(key_trace),
    )


def extract_events(scene: Scene, params: PipelineParams = PipelineParams()) -> list[InteractionEvent]:
    return assemble_events(scene, scan_scene(scene, params), params)


# ----------------------------------------------------------------------------- catalog

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def event_row(e: InteractionEvent) -> dict[str, str]:
    return {
        "scene_id": e.scene_id,
        "dataset_tag": e.dataset_tag,
        "agent_ids": ";".join(e.agent_ids),
        "start_step": _fmt(e.start_step),
        "end_step": _fmt(e.end_step),
        "duration_s": _fmt(e.duration_s),
        "intensity_max": _fmt(e.intensity_max),
        "intensity_mean": _fmt(e.intensity_mean),
        "min_pet": _fmt(e.min_pet),
        "n_agents": _fmt(e.n_agents),
        "has_av": _fmt(e.has_av),
        "agent_types": ";".join(f"{t}:{n}" for t, n in e.agent_types),
        "conflict_types": ";".join(e.conflict_types),
    }


def _split(text: str) -> list[str]:
    return [x for x in text.split(";") if x]


def event_from_row(row: Mapping) -> InteractionEvent:
    def num(key):
        v = row[key]
        return None if v in ("", None) else float(v)

    types = []
    for item in _split(str(row["agent_types"])):
        name, _, count = item.rpartition(":")
        types.append((name, int(count)))
    has_av = row["has_av"]
    if isinstance(has_av, str):
        has_av = has_av.strip().lower() in ("1", "true")
    return InteractionEvent(
        scene_id=str(row["scene_id"]),
        dataset_tag=str(row.get("dataset_tag") or ""),
        agent_ids=tuple(_split(str(row["agent_ids"]))),
        start_step=int(row["start_step"]),
        end_step=int(row["end_step"]),
        duration_s=num("duration_s"),
        intensity_max=num("intensity_max"),
        intensity_mean=num("intensity_mean"),
        min_pet=num("min_pet"),
        n_agents=int(row["n_agents"]),
        has_av=bool(has_av),
        agent_types=tuple(types),
        conflict_types=tuple(_split(str(row["conflict_types"]))),
    )


def catalog_text(events: Iterable[InteractionEvent], as_json: bool = False) -> str:
    buf = io.StringIO()
    if as_json:
        for e in events:
            buf.write(json.dumps(event_row(e), sort_keys=False) + "\n")
        return buf.getvalue()
    writer = csv.DictWriter(buf, fieldnames=CATALOG_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for e in events:
        writer.writerow(event_row(e))
    return buf.getvalue()


def write_catalog(events: Iterable[InteractionEvent], dest, as_json: bool = False) -> None:
    Path(dest).write_text(catalog_text(events, as_json), encoding="utf-8", newline="\n")


def read_catalog(path) -> list[InteractionEvent]:
    """Read a catalog written as CSV or JSONL (detected from content)."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return [event_from_row(json.loads(line)) for line in text.splitlines() if line.strip()]
    return [event_from_row(row) for row in csv.DictReader(io.StringIO(text))]


def event_ids(events: Sequence[InteractionEvent]) -> list[str]:
    """Stable ids ``<scene_id>/<k>``, k counting events of a scene in catalog order."""
    counts: Counter = Counter()
    out = []
    for e in events:
        out.append(f"{e.scene_id}/{counts[e.scene_id]}")
        counts[e.scene_id] += 1
    return out


def find_event(events: Sequence[InteractionEvent], event_id: str) -> InteractionEvent:
    """Look up by ``<scene_id>/<k>`` id or by 0-based catalog row index."""
    ids = event_ids(events)
    if event_id in ids:
        return events[ids.index(event_id)]
    if event_id.isdigit() and int(event_id) < len(events):
        return events[int(event_id)]
    raise UnknownEventId(f"no event {event_id!r} in catalog")


# ------------------------------------------------------------------------------ export

def export_event(scene: Scene, event: InteractionEvent, out_dir, prefix: str = "event",
                 params: PipelineParams = PipelineParams()) -> list[Path]:
    """Write trajectory, per-step MSAA/key-agent trace and conflict annotation CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traj = out / f"{prefix}_trajectories.csv"
    write_scene_csv(scene, traj, track_ids=event.agent_ids)

    records = [scan_step(scene, s, params) for s in range(event.start_step, event.end_step + 1)]
    members = set(event.agent_ids)
    trace_rows = []
    note_rows = []
    for rec in records:
        comps = [c for c in rec.components if set(c.agent_ids) & members]
        value = sum(rec.intensities[c][0] for c in comps)
        keys = sorted({k for c in comps for k in rec.intensities[c][1]})
        trace_rows.append([rec.step, repr(float(value)), ";".join(keys)])
        for c in comps:
            for p in c.pairs:
                note_rows.append([rec.step, p.id_a, p.id_b, repr(p.point[0]), repr(p.point[1]),
                                  repr(p.time_a), repr(p.time_b), rec.conflict_types[p.key].value])
    trace = out / f"{prefix}_msaa_trace.csv"
    _write_rows(trace, ["step", "msaa", "key_agents"], trace_rows)
    notes = out / f"{prefix}_conflicts.csv"
    _write_rows(notes, ["step", "id_a", "id_b", "x", "y", "time_a", "time_b", "conflict_type"], note_rows)
    return [traj, trace, notes]


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8", newline="\n")
