"""Planar polyline primitives: intersection, distance-based buffers, arc length.

Buffers are never built as polygons. A point is inside the n-meter buffer of a
polyline iff its distance to the polyline is <= n (boundary counts as inside).
"""

from __future__ import annotations

import math
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import InvalidPolyline, NonPositiveBuffer, PointNotOnPolyline

# Consecutive vertices closer than this are duplicates.
DUPLICATE_EPS = 1e-9
# A point within this distance of a polyline lies on it.
ON_LINE_EPS = 1e-6
# Spacing of interior samples for buffer membership.
SAMPLE_PITCH = 0.1

_PARAM_EPS = 1e-12


def dedupe_points(points: Iterable[Sequence[float]]) -> list[tuple[float, float]]:
    out: list[tuple[float, float]] = []
    for x, y in points:
        p = (float(x), float(y))
        if out and math.hypot(p[0] - out[-1][0], p[1] - out[-1][1]) <= DUPLICATE_EPS:
            continue
        out.append(p)
    return out


class Polyline:
    """An immutable planar polyline with cached cumulative arc lengths."""

    __slots__ = ("points", "cum", "seg_vec", "seg_len")

    def __init__(self, points):
        pts = np.array(points, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            raise InvalidPolyline("polyline needs at least one point")
        seg_vec = np.diff(pts, axis=0)
        seg_len = np.hypot(seg_vec[:, 0], seg_vec[:, 1])
        if np.any(seg_len <= DUPLICATE_EPS):
            raise InvalidPolyline("consecutive duplicate points")
        for arr in (pts, seg_vec, seg_len):
            arr.setflags(write=False)
        cum = np.concatenate(([0.0], np.cumsum(seg_len)))
        cum.setflags(write=False)
        self.points = pts
        self.seg_vec = seg_vec
        self.seg_len = seg_len
        self.cum = cum

    @property
    def length(self) -> float:
        return float(self.cum[-1])

    @property
    def n_segments(self) -> int:
        return len(self.seg_len)

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other) -> bool:
        return isinstance(other, Polyline) and np.array_equal(self.points, other.points)

    def __hash__(self) -> int:
        return hash(self.points.tobytes())

    def __repr__(self) -> str:
        return f"Polyline({self.points.tolist()})"

    def as_tuples(self) -> list[tuple[float, float]]:
        return [(float(x), float(y)) for x, y in self.points]

    def point_at(self, arc: float) -> tuple[float, float]:
        """Point at arc length ``arc`` (clamped to the polyline)."""
        if self.n_segments == 0 or arc <= 0:
            return tuple(self.points[0])
        if arc >= self.length:
            return tuple(self.points[-1])
        i = int(np.searchsorted(self.cum, arc, side="right")) - 1
        i = min(i, self.n_segments - 1)
        t = (arc - self.cum[i]) / self.seg_len[i]
        p = self.points[i] + t * self.seg_vec[i]
        return (float(p[0]), float(p[1]))

    def direction_at(self, arc: float) -> Optional[tuple[float, float]]:
        """Unit tangent of the segment carrying arc length ``arc``; None if degenerate.

        At an interior vertex the outgoing segment is used.
        """
        if self.n_segments == 0:
            return None
        i = int(np.searchsorted(self.cum, arc, side="right")) - 1
        i = min(max(i, 0), self.n_segments - 1)
        v = self.seg_vec[i] / self.seg_len[i]
        return (float(v[0]), float(v[1]))

    def truncated(self, arc: float) -> "Polyline":
        """Prefix of the polyline up to arc length ``arc``."""
        if arc >= self.length:
            return self
        if arc <= DUPLICATE_EPS:
            return Polyline(self.points[:1])
        i = int(np.searchsorted(self.cum, arc, side="right")) - 1
        end = self.point_at(arc)
        pts = [tuple(p) for p in self.points[: i + 1]] + [end]
        return Polyline(dedupe_points(pts))

    def extended(self, extra: float, heading: float) -> "Polyline":
        """Append a straight piece of length ``extra`` along ``heading``."""
        if extra <= DUPLICATE_EPS:
            return self
        last = self.points[-1]
        end = (last[0] + extra * math.cos(heading), last[1] + extra * math.sin(heading))
        return Polyline(dedupe_points([tuple(p) for p in self.points] + [end]))


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _segment_params(line: Polyline, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distances (k, m) from k points to m segments and clipped projection params."""
    P = line.points[:-1]
    R = line.seg_vec
    d = pts[:, None, :] - P[None, :, :]
    t = np.einsum("kmj,mj->km", d, R) / (line.seg_len ** 2)[None, :]
    t = np.clip(t, 0.0, 1.0)
    proj = P[None, :, :] + t[..., None] * R[None, :, :]
    diff = pts[:, None, :] - proj
    dist = np.hypot(diff[..., 0], diff[..., 1])
    return dist, t


def distances_to_polyline(pts, line: Polyline, chunk: int = 4096) -> np.ndarray:
    """Minimum distance from each of ``pts`` to ``line``."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    if line.n_segments == 0:
        diff = pts - line.points[0]
        return np.hypot(diff[:, 0], diff[:, 1])
    out = np.empty(len(pts))
    for lo in range(0, len(pts), chunk):
        dist, _ = _segment_params(line, pts[lo:lo + chunk])
        out[lo:lo + chunk] = dist.min(axis=1)
    return out


def min_distance_to_polyline(p, line: Polyline) -> float:
    return float(distances_to_polyline([p], line)[0])


def sample_polyline(line: Polyline, pitch: float = SAMPLE_PITCH) -> np.ndarray:
    """Vertices plus interior points so that consecutive samples are <= pitch apart."""
    if line.n_segments == 0:
        return line.points.copy()
    counts = np.maximum(1, np.ceil(line.seg_len / pitch - 1e-12).astype(int))
    seg_idx = np.repeat(np.arange(line.n_segments), counts)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    frac = (np.arange(counts.sum()) - np.repeat(starts, counts)) / np.repeat(counts, counts)
    pts = line.points[seg_idx] + frac[:, None] * line.seg_vec[seg_idx]
    return np.vstack([pts, line.points[-1:]])


def _check_buffer(n: float) -> None:
    if not n > 0:
        raise NonPositiveBuffer(f"buffer width must be positive, got {n}")


def enters_buffer(moving: Polyline, corridor: Polyline, n: float) -> bool:
    """True iff some sampled point of ``moving`` lies in the n-meter buffer of ``corridor``."""
    _check_buffer(n)
    samples = sample_polyline(moving)
    return bool(np.any(distances_to_polyline(samples, corridor) <= n))


def starts_outside_buffer(moving: Polyline, corridor: Polyline, n: float) -> bool:
    """True iff the first point of ``moving`` is strictly farther than n from ``corridor``."""
    _check_buffer(n)
    return min_distance_to_polyline(moving.points[0], corridor) > n


def arc_length_to_point(line: Polyline, p) -> float:
    """Smallest arc length at which ``line`` passes through ``p``."""
    pt = np.asarray(p, dtype=float).reshape(1, 2)
    if line.n_segments == 0:
        if math.hypot(*(pt[0] - line.points[0])) <= ON_LINE_EPS:
            return 0.0
        raise PointNotOnPolyline(f"{tuple(pt[0])} is not on the polyline")
    dist, t = _segment_params(line, pt)
    dist, t = dist[0], t[0]
    hits = np.nonzero(dist <= ON_LINE_EPS)[0]
    if len(hits) == 0:
        raise PointNotOnPolyline(f"{tuple(pt[0])} is {dist.min():.3g} m off the polyline")
    arcs = line.cum[hits] + t[hits] * line.seg_len[hits]
    return float(arcs.min())


def _point_on_other(line: Polyline, p) -> Optional[float]:
    try:
        return arc_length_to_point(line, p)
    except PointNotOnPolyline:
        return None


def first_intersection(a: Polyline, b: Polyline):
    """Earliest intersection along ``a`` with ``b``.

    Returns ``(point, arc_a, arc_b)`` or None. Collinear overlaps report the
    first overlapping point along ``a``; ties on ``arc_a`` go to the smaller
    ``arc_b``.
    """
    if a.n_segments == 0 or b.n_segments == 0:
        if a.n_segments == 0:
            arc_b = _point_on_other(b, a.points[0])
            if arc_b is None:
                return None
            return tuple(map(float, a.points[0])), 0.0, arc_b
        arc_a = _point_on_other(a, b.points[0])
        if arc_a is None:
            return None
        return tuple(map(float, b.points[0])), arc_a, 0.0

    P = a.points[:-1][:, None, :]
    R = a.seg_vec[:, None, :]
    Q = b.points[:-1][None, :, :]
    S = b.seg_vec[None, :, :]
    la = a.seg_len[:, None]
    lb = b.seg_len[None, :]
    qp = Q - P
    rxs = _cross(R, S)
    qpxr = _cross(qp, R)
    qpxs = _cross(qp, S)

    nonpar = np.abs(rxs) > 1e-12 * la * lb
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(nonpar, qpxs / rxs, np.nan)
        u = np.where(nonpar, qpxr / rxs, np.nan)
    cross_hit = nonpar & (t >= -_PARAM_EPS) & (t <= 1 + _PARAM_EPS) \
        & (u >= -_PARAM_EPS) & (u <= 1 + _PARAM_EPS)

    # Collinear overlap: Q lies on the carrier line of R.
    collinear = ~nonpar & (np.abs(qpxr) / la <= DUPLICATE_EPS * 10)
    rr = la ** 2
    t0 = np.einsum("ijk,ijk->ij", qp, np.broadcast_to(R, qp.shape)) / rr
    t1 = t0 + np.einsum("ijk,ijk->ij", np.broadcast_to(S, qp.shape),
                        np.broadcast_to(R, qp.shape)) / rr
    lo = np.maximum(0.0, np.minimum(t0, t1))
    hi = np.minimum(1.0, np.maximum(t0, t1))
    overlap_hit = collinear & (lo <= hi + _PARAM_EPS)

    t_final = np.where(cross_hit, np.clip(np.nan_to_num(t), 0.0, 1.0), lo)
    hit = cross_hit | overlap_hit
    if not hit.any():
        return None
    ii, jj = np.nonzero(hit)
    tt = t_final[ii, jj]
    pts = a.points[ii] + tt[:, None] * a.seg_vec[ii]
    arc_a = a.cum[ii] + tt * a.seg_len[ii]
    # Param along b, recomputed from the point so both hit kinds share one path.
    d = pts - b.points[jj]
    uu = np.clip(np.einsum("kj,kj->k", d, b.seg_vec[jj]) / b.seg_len[jj] ** 2, 0.0, 1.0)
    arc_b = b.cum[jj] + uu * b.seg_len[jj]
    best = arc_a.min()
    cand = np.nonzero(arc_a <= best + 1e-9)[0]
    k = cand[np.argmin(arc_b[cand])]
    return (float(pts[k, 0]), float(pts[k, 1])), float(arc_a[k]), float(arc_b[k])
