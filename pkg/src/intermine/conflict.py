"""Future paths, pairwise spatiotemporal conflicts and chain components."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

from .errors import InterMineError
from .geometry import (
    DUPLICATE_EPS,
    Polyline,
    arc_length_to_point,
    enters_buffer,
    first_intersection,
    starts_outside_buffer,
)
from .traj_model import AgentTrack, recorded_path_after

_TIME_EPS = 1e-9


class PathMode(str, Enum):
    RECORDED_RETIMED = "recorded_retimed"
    STRAIGHT_LINE = "straight_line"


@dataclass(frozen=True)
class ConflictParams:
    horizon_m: float = 5.0          # seconds of look-ahead
    conf_time: float = 3.0          # seconds; conflict iff arrival gap < conf_time
    buffer_floor: float = 1.0       # meters
    path_mode: PathMode = PathMode.RECORDED_RETIMED
    min_speed: float = 0.1          # m/s; slower agents are skipped
    include_non_vehicles: bool = False

    def __post_init__(self):
        if not self.horizon_m > 0:
            raise InterMineError("horizon_m must be positive")
        if not self.conf_time > 0:
            raise InterMineError("conf_time must be positive")
        if not self.buffer_floor > 0:
            raise InterMineError("buffer_floor must be positive")
        if self.min_speed < 0:
            raise InterMineError("min_speed must be >= 0")
        object.__setattr__(self, "path_mode", PathMode(self.path_mode))


@dataclass(frozen=True)
class FuturePath:
    track_id: str
    origin_step: int
    path: Polyline
    assumed_speed: float
    horizon_m: float
    heading: float = 0.0
    width: float = 1.8
    length: float = 4.5


@dataclass(frozen=True)
class ConflictPair:
    id_a: str
    id_b: str
    point: tuple[float, float]
    time_a: float
    time_b: float
    buffer_n: float

    @property
    def key(self) -> tuple[str, str]:
        return (self.id_a, self.id_b)

    def time_of(self, track_id: str) -> float:
        if track_id == self.id_a:
            return self.time_a
        if track_id == self.id_b:
            return self.time_b
        raise KeyError(track_id)


@dataclass(frozen=True)
class ChainComponent:
    agent_ids: tuple[str, ...]
    pairs: tuple[ConflictPair, ...]


def future_path(
    track: AgentTrack,
    step: int,
    horizon_m: float = 5.0,
    mode: PathMode | str = PathMode.RECORDED_RETIMED,
) -> FuturePath:
    """Assumed path over the horizon at the speed held at ``step``.

    In recorded mode the recorded geometry is cut at speed * horizon meters and
    extended straight along the final heading when the recording runs out.
    """
    if not horizon_m > 0:
        raise InterMineError("horizon_m must be positive")
    mode = PathMode(mode)
    state = track.state_at(step)
    speed = state.speed or 0.0
    heading = state.heading or 0.0
    reach = speed * horizon_m
    origin = (state.x, state.y)
    if reach <= DUPLICATE_EPS:
        path = Polyline([origin])
    elif mode is PathMode.STRAIGHT_LINE:
        path = Polyline([origin]).extended(reach, heading)
    else:
        recorded = recorded_path_after(track, step)
        if recorded.length >= reach:
            path = recorded.truncated(reach)
        else:
            final_heading = track.states[-1].heading
            final_heading = heading if final_heading is None else final_heading
            path = recorded.extended(reach - recorded.length, final_heading)
    return FuturePath(
        track_id=track.track_id,
        origin_step=step,
        path=path,
        assumed_speed=speed,
        horizon_m=horizon_m,
        heading=heading,
        width=state.width,
        length=state.length,
    )


def time_to_point(fp: FuturePath, p) -> float:
    """Seconds for the agent to reach ``p`` at its assumed speed; inf if it never moves."""
    arc = arc_length_to_point(fp.path, p)
    if fp.assumed_speed <= 0:
        return math.inf
    return arc / fp.assumed_speed


def buffer_width(fp: FuturePath, params: ConflictParams) -> float:
    return max(params.buffer_floor, fp.width / 2.0)


def st_conflict(fa: FuturePath, fb: FuturePath, params: ConflictParams = ConflictParams()) -> Optional[ConflictPair]:
    """Spatiotemporal conflict between two future paths, or None.

    Each path must start outside, and enter, the buffer of the other one.
    Requiring both directions is what rules out same-lane following, where
    the leader sits on the follower's path.
    """
    if fa.track_id == fb.track_id:
        return None
    if fb.track_id < fa.track_id:
        fa, fb = fb, fa
    if fa.assumed_speed < params.min_speed or fb.assumed_speed < params.min_speed:
        return None
    if fa.assumed_speed <= 0 or fb.assumed_speed <= 0:
        return None
    hit = first_intersection(fa.path, fb.path)
    if hit is None:
        return None
    point = hit[0]
    time_a = time_to_point(fa, point)
    time_b = time_to_point(fb, point)
    limit = params.horizon_m + _TIME_EPS
    if not (time_a <= limit and time_b <= limit):
        return None
    if not abs(time_a - time_b) < params.conf_time:
        return None
    for corridor, moving in ((fa, fb), (fb, fa)):
        n = buffer_width(corridor, params)
        if not starts_outside_buffer(moving.path, corridor.path, n):
            return None
        if not enters_buffer(moving.path, corridor.path, n):
            return None
    n = max(buffer_width(fa, params), buffer_width(fb, params))
    return ConflictPair(fa.track_id, fb.track_id, point, time_a, time_b, n)


class _UnionFind:
    def __init__(self, items: Iterable[str]):
        self.parent = {x: x for x in items}

    def find(self, x: str) -> str:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # Smaller id becomes the root so the forest is order-independent.
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def components_from_pairs(agent_ids: Iterable[str], pairs: Sequence[ConflictPair]) -> list[ChainComponent]:
    ids = sorted(set(agent_ids))
    uf = _UnionFind(ids)
    for p in pairs:
        uf.union(p.id_a, p.id_b)
    groups: dict[str, list[str]] = {}
    for x in ids:
        groups.setdefault(uf.find(x), []).append(x)
    comps = []
    for members in groups.values():
        if len(members) < 2:
            continue
        member_set = set(members)
        comp_pairs = sorted((p for p in pairs if p.id_a in member_set), key=lambda p: p.key)
        comps.append(ChainComponent(tuple(members), tuple(comp_pairs)))
    comps.sort(key=lambda c: c.agent_ids[0])
    return comps


def conflict_pairs(paths: Sequence[FuturePath], params: ConflictParams = ConflictParams()) -> list[ConflictPair]:
    ordered = sorted(paths, key=lambda fp: fp.track_id)
    ids = [fp.track_id for fp in ordered]
    if len(set(ids)) != len(ids):
        raise InterMineError("duplicate track ids in future paths")
    out = []
    for fa, fb in itertools.combinations(ordered, 2):
        pair = st_conflict(fa, fb, params)
        if pair is not None:
            out.append(pair)
    return out


def build_components(paths: Sequence[FuturePath], params: ConflictParams = ConflictParams()) -> list[ChainComponent]:
    """Connected components (>= 2 agents) of the pairwise conflict graph at one step."""
    steps = {fp.origin_step for fp in paths}
    if len(steps) > 1:
        raise InterMineError(f"future paths span several steps {sorted(steps)}")
    pairs = conflict_pairs(paths, params)
    return components_from_pairs((fp.track_id for fp in paths), pairs)
