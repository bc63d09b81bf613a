"""Synthetic straight-path scenes with known conflict times.

Agent k travels at a constant speed along heading ``approach_angles[k]`` and
passes the origin exactly at ``arrival_offsets[k]`` seconds. Following scenes
are the special case of equal headings on one lane.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .conflict import ConflictParams
from .errors import InvalidSpec
from .traj_model import (
    DEFAULT_LENGTH,
    DEFAULT_WIDTH,
    AgentState,
    AgentTrack,
    AgentType,
    Scene,
)

_PARALLEL_EPS = 1e-9


class ScenarioKind(str, Enum):
    CROSSING = "crossing"
    MERGING = "merging"
    HEAD_ON = "head_on"
    FOLLOWING = "following"
    CHAIN = "chain"


@dataclass(frozen=True)
class ScenarioSpec:
    kind: ScenarioKind
    speeds: tuple[float, ...]
    arrival_offsets: tuple[float, ...]
    approach_angles: tuple[float, ...]     # degrees
    dt: float = 0.1
    duration: Optional[float] = None       # seconds; default max offset + 2
    seed: int = 0
    lateral_offsets: tuple[float, ...] = ()
    ego_index: Optional[int] = None
    scene_id: str = ""
    dataset_tag: str = "synth"
    width: float = DEFAULT_WIDTH
    length: float = DEFAULT_LENGTH

    def __post_init__(self):
        try:
            kind = ScenarioKind(self.kind)
        except ValueError as exc:
            raise InvalidSpec(f"unknown kind {self.kind!r}") from exc
        object.__setattr__(self, "kind", kind)
        for name in ("speeds", "arrival_offsets", "approach_angles", "lateral_offsets"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        n = len(self.speeds)
        if n < 2:
            raise InvalidSpec("need at least two agents")
        if len(self.arrival_offsets) != n or len(self.approach_angles) != n:
            raise InvalidSpec("speeds, arrival_offsets and approach_angles differ in length")
        if self.lateral_offsets and len(self.lateral_offsets) != n:
            raise InvalidSpec("lateral_offsets length differs from speeds")
        if any(not v > 0 for v in self.speeds):
            raise InvalidSpec("speeds must be positive")
        if any(not math.isfinite(x) for x in self.arrival_offsets + self.approach_angles):
            raise InvalidSpec("offsets and angles must be finite")
        if not self.dt > 0:
            raise InvalidSpec("dt must be positive")
        if self.duration is None:
            object.__setattr__(self, "duration", max(self.arrival_offsets) + 2.0)
        if self.duration < max(self.arrival_offsets) + 2.0 - 1e-9:
            raise InvalidSpec("duration must be >= max arrival offset + 2 s")
        if self.ego_index is not None and not 0 <= self.ego_index < n:
            raise InvalidSpec("ego_index out of range")
        if not self.width > 0 or not self.length > 0:
            raise InvalidSpec("agent extents must be positive")
        if not self.scene_id:
            object.__setattr__(self, "scene_id", f"synth_{self.kind.value}_{self.seed}")

    @property
    def n_agents(self) -> int:
        return len(self.speeds)

    def track_ids(self) -> list[str]:
        width = max(2, len(str(self.n_agents - 1)))
        return [f"v{k:0{width}d}" for k in range(self.n_agents)]


def generate(spec: ScenarioSpec) -> Scene:
    n_steps = int(round(spec.duration / spec.dt)) + 1
    laterals = spec.lateral_offsets or (0.0,) * spec.n_agents
    tracks = {}
    for k, tid in enumerate(spec.track_ids()):
        theta = math.radians(spec.approach_angles[k])
        ux, uy = math.cos(theta), math.sin(theta)
        # Lateral shift to the left of the direction of travel.
        ox, oy = -uy * laterals[k], ux * laterals[k]
        v = spec.speeds[k]
        states = []
        for step in range(n_steps):
            s = v * (step * spec.dt - spec.arrival_offsets[k])
            states.append(AgentState(
                track_id=tid, step=step, x=s * ux + ox, y=s * uy + oy,
                heading=theta, speed=v, accel=0.0, length=spec.length, width=spec.width,
            ))
        tracks[tid] = AgentTrack(tid, tuple(states), AgentType.VEHICLE, is_ego=(k == spec.ego_index))
    return Scene(spec.scene_id, spec.dt, tracks, spec.dataset_tag)


def expected_conflicts(spec: ScenarioSpec, params: ConflictParams = ConflictParams()) -> list[tuple[str, str]]:
    """Pairs in conflict at step 0, from the spec arithmetic alone.

    A pair conflicts when both agents reach the origin within the horizon,
    their arrival gap is below conf_time, and their headings cross with each
    start lying clear of the other's lane (d * |sin(angle)| > buffer).
    """
    if spec.lateral_offsets and any(spec.lateral_offsets):
        raise InvalidSpec("expected_conflicts assumes zero lateral offsets")
    ids = spec.track_ids()
    buffer = max(params.buffer_floor, spec.width / 2.0)
    out = []
    for i, j in itertools.combinations(range(spec.n_agents), 2):
        ti, tj = spec.arrival_offsets[i], spec.arrival_offsets[j]
        if spec.speeds[i] < params.min_speed or spec.speeds[j] < params.min_speed:
            continue
        if not (0 <= ti <= params.horizon_m and 0 <= tj <= params.horizon_m):
            continue
        if not abs(ti - tj) < params.conf_time:
            continue
        sin = abs(math.sin(math.radians(spec.approach_angles[i] - spec.approach_angles[j])))
        if sin <= _PARALLEL_EPS:
            continue
        di, dj = spec.speeds[i] * ti, spec.speeds[j] * tj
        if min(di, dj) * sin <= buffer:
            continue
        out.append((ids[i], ids[j]))
    return sorted(out)


# ------------------------------------------------------------------------ spec helpers

def crossing_spec(speeds=(10.0, 10.0), offsets=(2.0, 2.5), angles=(0.0, 90.0), **kw) -> ScenarioSpec:
    return ScenarioSpec(ScenarioKind.CROSSING, tuple(speeds), tuple(offsets), tuple(angles), **kw)


def following_spec(speed: float = 10.0, gap_m: float = 10.0, n_agents: int = 2,
                   lead_offset: float = 1.0, **kw) -> ScenarioSpec:
    """Same-lane platoon with equal speeds and ``gap_m`` between consecutive agents."""
    offsets = tuple(lead_offset + k * gap_m / speed for k in range(n_agents))
    return ScenarioSpec(ScenarioKind.FOLLOWING, (speed,) * n_agents, offsets, (0.0,) * n_agents, **kw)


def chain_spec(n_agents: int = 3, spacing: float = 1.0, first_offset: float = 1.0,
               speed: float = 10.0, angle_step: float = 50.0, **kw) -> ScenarioSpec:
    """Agents through a common point, arrivals ``spacing`` seconds apart."""
    offsets = tuple(first_offset + k * spacing for k in range(n_agents))
    angles = tuple(k * angle_step for k in range(n_agents))
    return ScenarioSpec(ScenarioKind.CHAIN, (speed,) * n_agents, offsets, angles, **kw)


def shifting_chain_spec(**kw) -> ScenarioSpec:
    """Four agents whose conflict group changes as early arrivals clear the point."""
    kw.setdefault("spacing", 1.5)
    return chain_spec(n_agents=4, first_offset=1.0, **kw)


def random_crossing_spec(rng: np.random.Generator, seed: int = 0, dt: float = 0.1) -> ScenarioSpec:
    """Two-agent crossing with speeds in [5, 20] m/s, offsets in [0.5, 6] s and a
    heading difference in [45, 135] degrees."""
    speeds = tuple(rng.uniform(5.0, 20.0, 2))
    offsets = tuple(rng.uniform(0.5, 6.0, 2))
    a0 = float(rng.uniform(0.0, 360.0))
    delta = float(rng.uniform(45.0, 135.0)) * (1 if rng.random() < 0.5 else -1)
    return crossing_spec(speeds, offsets, (a0, a0 + delta), dt=dt, seed=seed, scene_id=f"synth_sweep_{seed}")


def crossing_sweep(n: int, seed: int = 0) -> list[ScenarioSpec]:
    rng = np.random.default_rng(seed)
    return [random_crossing_spec(rng, seed=k) for k in range(n)]


# -------------------------------------------------------------------- key=value specs

def spec_from_mapping(values: Mapping[str, str]) -> ScenarioSpec:
    """Build a spec from string values; list fields are comma-separated."""
    lists = {"speeds", "arrival_offsets", "approach_angles", "lateral_offsets"}
    kw: dict = {}
    for key, raw in values.items():
        key = key.strip().replace("-", "_")
        raw = str(raw).strip()
        try:
            if key in lists:
                kw[key] = tuple(float(x) for x in raw.split(",") if x.strip())
            elif key in ("dt", "duration", "width", "length"):
                kw[key] = float(raw)
            elif key in ("seed", "ego_index"):
                kw[key] = int(raw)
            elif key in ("kind", "scene_id", "dataset_tag"):
                kw[key] = raw
            else:
                raise InvalidSpec(f"unknown spec key {key!r}")
        except ValueError as exc:
            raise InvalidSpec(f"bad value for {key}: {raw!r}") from exc
    missing = {"kind", "speeds", "arrival_offsets", "approach_angles"} - set(kw)
    if missing:
        raise InvalidSpec(f"spec lacks {sorted(missing)}")
    return ScenarioSpec(**kw)
