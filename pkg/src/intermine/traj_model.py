"""Unified trajectory data model, scene CSV ingestion and dynamics backfill."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import (
    EmptyInput,
    InterMineError,
    MixedScenes,
    NonContiguousTrack,
    NonPositiveDt,
    StepOutOfRange,
)
from .geometry import Polyline, dedupe_points

CSV_COLUMNS = (
    "scene_id", "track_id", "step", "x", "y", "heading", "speed", "accel",
    "length", "width", "height", "agent_type", "is_ego",
)

# Extents used when a record leaves them empty.
DEFAULT_LENGTH = 4.5
DEFAULT_WIDTH = 1.8
DEFAULT_HEIGHT = 0.0

# Displacements below this keep the previous heading.
HEADING_HOLD_EPS = 1e-6


class AgentType(str, Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    CYCLIST = "cyclist"
    OTHER = "other"


def normalize_heading(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class AgentState:
    track_id: str
    step: int
    x: float
    y: float
    heading: Optional[float] = None
    speed: Optional[float] = None
    accel: Optional[float] = None
    length: float = DEFAULT_LENGTH
    width: float = DEFAULT_WIDTH
    height: float = DEFAULT_HEIGHT

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0 or self.height < 0:
            raise InterMineError(f"track {self.track_id!r} step {self.step}: non-positive extent")
        if self.speed is not None and self.speed < 0:
            raise InterMineError(f"track {self.track_id!r} step {self.step}: negative speed")
        if self.heading is not None:
            object.__setattr__(self, "heading", normalize_heading(self.heading))

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class AgentTrack:
    track_id: str
    states: tuple[AgentState, ...]
    agent_type: AgentType = AgentType.VEHICLE
    is_ego: bool = False

    def __post_init__(self):
        if not self.states:
            raise EmptyInput(f"track {self.track_id!r} has no states")
        for prev, cur in zip(self.states, self.states[1:]):
            if cur.step != prev.step + 1:
                raise NonContiguousTrack(
                    f"track {self.track_id!r}: step {cur.step} follows {prev.step}"
                )
        if any(s.track_id != self.track_id for s in self.states):
            raise InterMineError(f"track {self.track_id!r} holds foreign states")

    @property
    def first_step(self) -> int:
        return self.states[0].step

    @property
    def last_step(self) -> int:
        return self.states[-1].step

    def has_step(self, step: int) -> bool:
        return self.first_step <= step <= self.last_step

    def state_at(self, step: int) -> AgentState:
        if not self.has_step(step):
            raise StepOutOfRange(
                f"step {step} outside track {self.track_id!r} window "
                f"[{self.first_step}, {self.last_step}]"
            )
        return self.states[step - self.first_step]


@dataclass(frozen=True)
class Scene:
    scene_id: str
    dt: float
    tracks: Mapping[str, AgentTrack]
    dataset_tag: str = ""

    def __post_init__(self):
        if not self.dt > 0:
            raise NonPositiveDt(f"dt must be positive, got {self.dt}")
        for key, track in self.tracks.items():
            if key != track.track_id:
                raise InterMineError(f"track key {key!r} != track id {track.track_id!r}")

    @property
    def steps(self) -> range:
        if not self.tracks:
            return range(0)
        lo = min(t.first_step for t in self.tracks.values())
        hi = max(t.last_step for t in self.tracks.values())
        return range(lo, hi + 1)


def backfill_dynamics(track: AgentTrack, dt: float) -> AgentTrack:
    """Fill absent speed, heading and accel by forward finite differences.

    Fields already present are kept as is. The last sample copies the
    penultimate one; a single-sample track gets zeros.
    """
    if not dt > 0:
        raise NonPositiveDt(f"dt must be positive, got {dt}")
    states = track.states
    n = len(states)
    fd_speed = [0.0] * n
    fd_heading: list[Optional[float]] = [None] * n
    for i in range(n - 1):
        dx = states[i + 1].x - states[i].x
        dy = states[i + 1].y - states[i].y
        dist = math.hypot(dx, dy)
        fd_speed[i] = dist / dt
        if dist >= HEADING_HOLD_EPS:
            fd_heading[i] = math.atan2(dy, dx)
    if n > 1:
        fd_speed[-1] = fd_speed[-2]
        fd_heading[-1] = fd_heading[-2]

    # Stationary samples hold the previous heading; leading ones take the first
    # moving heading, and a never-moving track gets 0.
    first_moving = next((h for h in fd_heading if h is not None), 0.0)
    held = first_moving
    for i in range(n):
        if fd_heading[i] is None:
            fd_heading[i] = held
        else:
            held = fd_heading[i]

    speed = [s.speed if s.speed is not None else fd_speed[i] for i, s in enumerate(states)]
    fd_accel = [0.0] * n
    for i in range(n - 1):
        fd_accel[i] = (speed[i + 1] - speed[i]) / dt
    if n > 1:
        fd_accel[-1] = fd_accel[-2]

    filled = []
    for i, s in enumerate(states):
        filled.append(replace(
            s,
            speed=speed[i],
            heading=s.heading if s.heading is not None else fd_heading[i],
            accel=s.accel if s.accel is not None else fd_accel[i],
        ))
    return replace(track, states=tuple(filled))


def recorded_path_after(track: AgentTrack, step: int) -> Polyline:
    """Recorded positions from ``step`` to the end of the track."""
    if not track.has_step(step):
        raise StepOutOfRange(
            f"step {step} outside track {track.track_id!r} window "
            f"[{track.first_step}, {track.last_step}]"
        )
    pts = [s.position for s in track.states[step - track.first_step:]]
    return Polyline(dedupe_points(pts))


# --------------------------------------------------------------------------- ingestion

def _opt_float(value) -> Optional[float]:
    if value is None:
        return None
    if isinstance(value, str):
        value = value.strip()
        if value == "":
            return None
    return float(value)


def _or_default(value: Optional[float], default: float) -> float:
    return default if value is None else value


def _parse_bool(value) -> bool:
    if value is None:
        return False
    if isinstance(value, str):
        value = value.strip().lower()
        if value in ("", "0", "false", "no"):
            return False
        if value in ("1", "true", "yes"):
            return True
        raise InterMineError(f"bad is_ego value {value!r}")
    return bool(value)


def _parse_step(value) -> int:
    if isinstance(value, str):
        value = value.strip()
    f = float(value)
    if f != int(f):
        raise InterMineError(f"non-integer step {value!r}")
    return int(f)


def ingest_scene(rows: Iterable[Mapping], dt: float, dataset_tag: str = "") -> Scene:
    """Group parsed records into a validated, backfilled Scene."""
    rows = list(rows)
    if not rows:
        raise EmptyInput("no records")
    if not dt > 0:
        raise NonPositiveDt(f"dt must be positive, got {dt}")
    scene_ids = {str(r["scene_id"]).strip() for r in rows}
    if len(scene_ids) > 1:
        raise MixedScenes(f"records span scenes {sorted(scene_ids)}")
    scene_id = scene_ids.pop()

    grouped: dict[str, list[Mapping]] = {}
    for r in rows:
        grouped.setdefault(str(r["track_id"]).strip(), []).append(r)

    tracks = {}
    for tid in sorted(grouped):
        recs = sorted(grouped[tid], key=lambda r: _parse_step(r["step"]))
        states = []
        for r in recs:
            states.append(AgentState(
                track_id=tid,
                step=_parse_step(r["step"]),
                x=float(r["x"]),
                y=float(r["y"]),
                heading=_opt_float(r.get("heading")),
                speed=_opt_float(r.get("speed")),
                accel=_opt_float(r.get("accel")),
                length=_or_default(_opt_float(r.get("length")), DEFAULT_LENGTH),
                width=_or_default(_opt_float(r.get("width")), DEFAULT_WIDTH),
                height=_or_default(_opt_float(r.get("height")), DEFAULT_HEIGHT),
            ))
        type_cell = (recs[0].get("agent_type") or "vehicle")
        agent_type = AgentType(str(type_cell).strip() or "vehicle")
        is_ego = any(_parse_bool(r.get("is_ego")) for r in recs)
        track = AgentTrack(tid, tuple(states), agent_type, is_ego)
        tracks[tid] = backfill_dynamics(track, dt)
    return Scene(scene_id=scene_id, dt=float(dt), tracks=tracks, dataset_tag=dataset_tag)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def scene_rows(scene: Scene, track_ids: Optional[Sequence[str]] = None) -> list[dict]:
    """Flatten a scene to CSV-ready records, ordered by track then step."""
    ids = sorted(scene.tracks) if track_ids is None else sorted(track_ids)
    out = []
    for tid in ids:
        track = scene.tracks[tid]
        for s in track.states:
            out.append({
                "scene_id": scene.scene_id, "track_id": tid, "step": s.step,
                "x": s.x, "y": s.y, "heading": s.heading, "speed": s.speed,
                "accel": s.accel, "length": s.length, "width": s.width,
                "height": s.height, "agent_type": track.agent_type.value,
                "is_ego": int(track.is_ego),
            })
    return out


def write_scene_csv(scene: Scene, dest, track_ids: Optional[Sequence[str]] = None) -> None:
    """Write a scene (or a subset of its tracks) in the canonical CSV format."""
    buf = io.StringIO()
    buf.write(f"# dt={scene.dt!r}\n")
    if scene.dataset_tag:
        buf.write(f"# dataset_tag={scene.dataset_tag}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in scene_rows(scene, track_ids):
        writer.writerow([_cell(rec[c]) for c in CSV_COLUMNS])
    Path(dest).write_text(buf.getvalue(), encoding="utf-8")


def parse_scene_text(text: str, dt: Optional[float] = None, dataset_tag: Optional[str] = None) -> Scene:
    """Parse scene CSV text; ``dt``/``dataset_tag`` arguments override comment lines."""
    meta = {}
    body = []
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("#"):
            key, sep, val = stripped.lstrip("#").strip().partition("=")
            if sep:
                meta[key.strip()] = val.strip()
            continue
        if stripped:
            body.append(line)
    if dt is None:
        if "dt" not in meta:
            raise NonPositiveDt("no dt given (need '# dt=<seconds>' line or explicit dt)")
        dt = float(meta["dt"])
    if dataset_tag is None:
        dataset_tag = meta.get("dataset_tag", "")
    reader = csv.DictReader(body)
    if reader.fieldnames is None:
        raise EmptyInput("no header")
    missing = {"scene_id", "track_id", "step", "x", "y"} - set(reader.fieldnames)
    if missing:
        raise InterMineError(f"missing columns {sorted(missing)}")
    return ingest_scene(list(reader), dt, dataset_tag)


def read_scene_csv(path, dt: Optional[float] = None, dataset_tag: Optional[str] = None) -> Scene:
    return parse_scene_text(Path(path).read_text(encoding="utf-8"), dt, dataset_tag)
