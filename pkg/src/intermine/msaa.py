"""Minimum sum of absolute accelerations (MSAA) needed to resolve a conflict chain.

Each agent keeps one constant longitudinal acceleration. Speed never drops
below zero (a braking agent stops and stays). A conflict pair is resolved when
the two passage times at its conflict point differ by at least ``tau_safe`` or
when one agent stops at or before its point (yields).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import ComponentError, InterMineError

_EPS = 1e-9
YIELD = "yield"


@dataclass(frozen=True)
class MsaaParams:
    tau_safe: float = 3.0
    a_min: float = -8.0
    a_max: float = 5.0
    infeasible_cap: float = 10.0
    exact_agent_limit: int = 6

    def __post_init__(self):
        if not self.a_min <= 0 <= self.a_max:
            raise InterMineError("acceleration bounds must bracket 0")
        if not self.tau_safe > 0:
            raise InterMineError("tau_safe must be positive")
        if self.exact_agent_limit < 2:
            raise InterMineError("exact_agent_limit must be >= 2")


@dataclass(frozen=True)
class AgentConflictState:
    """Speed and arc distance to each conflict point of one agent.

    ``distances`` is keyed by pair key ``(id_a, id_b)``.
    """
    track_id: str
    v: float
    distances: Mapping[tuple[str, str], float]

    def __post_init__(self):
        if self.v < 0:
            raise InterMineError(f"{self.track_id}: negative speed")
        for key, d in self.distances.items():
            if self.track_id not in key:
                raise InterMineError(f"{self.track_id}: pair {key} does not involve it")
            if d < 0:
                raise InterMineError(f"{self.track_id}: negative distance to {key}")


@dataclass(frozen=True)
class MsaaSolution:
    accels: dict
    objective: float
    feasible: bool
    key_agents: tuple[str, ...]
    orderings: dict
    approximate: bool = False


def passage_time(v: float, d: float, a: float) -> float:
    """First time the agent has covered ``d`` meters; ``math.inf`` if it never does."""
    if d <= 0:
        return 0.0
    disc = v * v + 2.0 * a * d
    if disc < 0:
        return math.inf
    denom = v + math.sqrt(disc)
    if denom <= 0:
        return math.inf
    return 2.0 * d / denom


def _stop_tol(v: float) -> float:
    return 1e-12 * max(1.0, v * v)


def stops_before(v: float, d: float, a: float) -> bool:
    """True when the agent halts at or before ``d`` (yield branch).

    Halting exactly at the point counts, so the yield branch is a closed set.
    """
    return d > 0 and v * v + 2.0 * a * d <= _stop_tol(v)


def yield_accel(v: float, d: float) -> float:
    """Largest acceleration that still stops the agent by ``d``."""
    return -(v * v) / (2.0 * d)


def accel_for_time(v: float, d: float, t: float) -> Optional[float]:
    """Constant acceleration reaching ``d`` exactly at ``t`` while still moving.

    None when no such acceleration exists (``t`` is at or beyond the latest
    arrival reachable without stopping, or not positive).
    """
    if t <= 0:
        return None
    if v > 0 and t >= 2.0 * d / v:
        return None
    return 2.0 * (d - v * t) / (t * t)


def _pair_key(pair) -> tuple[str, str]:
    if isinstance(pair, tuple):
        return pair
    return pair.key


@dataclass
class _Problem:
    ids: list[str]
    v: np.ndarray
    # pair index -> (i, j, d_i, d_j)
    pairs: list[tuple[int, int, float, float]]
    keys: list[tuple[str, str]]
    params: MsaaParams

    def times(self, a: Sequence[float]) -> list[tuple[float, float, bool, bool]]:
        out = []
        for i, j, di, dj in self.pairs:
            out.append((
                passage_time(self.v[i], di, a[i]), passage_time(self.v[j], dj, a[j]),
                stops_before(self.v[i], di, a[i]), stops_before(self.v[j], dj, a[j]),
            ))
        return out

    def pair_ok(self, k: int, a: Sequence[float]) -> bool:
        i, j, di, dj = self.pairs[k]
        if stops_before(self.v[i], di, a[i]) or stops_before(self.v[j], dj, a[j]):
            return True
        ti = passage_time(self.v[i], di, a[i])
        tj = passage_time(self.v[j], dj, a[j])
        return abs(ti - tj) >= self.params.tau_safe - _EPS

    def feasible(self, a: Sequence[float]) -> bool:
        lo, hi = self.params.a_min - _EPS, self.params.a_max + _EPS
        if any(x < lo or x > hi for x in a):
            return False
        return all(self.pair_ok(k, a) for k in range(len(self.pairs)))


def _build_problem(states: Sequence[AgentConflictState], pairs, params: MsaaParams) -> _Problem:
    ids = [s.track_id for s in states]
    if len(set(ids)) != len(ids):
        raise ComponentError("duplicate agent ids")
    index = {tid: k for k, tid in enumerate(ids)}
    by_id = {s.track_id: s for s in states}
    plist = []
    keys = []
    for pair in pairs:
        key = _pair_key(pair)
        a_id, b_id = key
        if a_id not in index or b_id not in index:
            raise ComponentError(f"pair {key} references an agent outside the component")
        try:
            da = by_id[a_id].distances[key]
            db = by_id[b_id].distances[key]
        except KeyError as exc:
            raise ComponentError(f"missing distance for pair {key}") from exc
        plist.append((index[a_id], index[b_id], float(da), float(db)))
        keys.append(key)
    if len(set(keys)) != len(keys):
        raise ComponentError("duplicate pairs")
    # Connectivity.
    if ids:
        seen = {0}
        frontier = [0]
        adj: dict[int, set[int]] = {k: set() for k in range(len(ids))}
        for i, j, _, _ in plist:
            adj[i].add(j)
            adj[j].add(i)
        while frontier:
            x = frontier.pop()
            for y in adj[x] - seen:
                seen.add(y)
                frontier.append(y)
        if len(seen) != len(ids):
            raise ComponentError("agents and pairs do not form a connected component")
    return _Problem(ids, np.array([float(s.v) for s in states]), plist, keys, params)


def _times_vec(v: float, d: float, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Passage times and stop flags for an array of accelerations."""
    a = np.asarray(a, dtype=float)
    if d <= 0:
        return np.zeros_like(a), np.zeros(a.shape, dtype=bool)
    disc = v * v + 2.0 * a * d
    stop = disc <= _stop_tol(v)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = 2.0 * d / (v + np.sqrt(np.maximum(disc, 0.0)))
    t = np.where(stop | ~np.isfinite(t), np.inf, t)
    return t, stop


def _accel_for_time_vec(v: float, d: float, t: np.ndarray) -> np.ndarray:
    """Vectorised accel_for_time; nan where no passing acceleration exists."""
    t = np.asarray(t, dtype=float)
    latest = 2.0 * d / v if v > 0 else np.inf
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        a = 2.0 * (d - v * t) / (t * t)
        bad = ~(t > 0) | (t >= latest) | ~np.isfinite(t)
    return np.where(bad, np.nan, a)


class _Solver:
    """Exact minimiser for small components.

    Agents on cycles of the conflict graph are conditioned on a grid; the
    remaining forest is solved by dynamic programming from a root. Leaves take
    an exact best response (the feasible set of one agent is a union of closed
    intervals whose endpoints are known in closed form); grid-valued agents
    are refined around the best seeds.
    """

    GRID_STEP = 0.01
    MAX_CELLS = 70_000
    MAX_AXIS = 4001
    SEEDS = 4
    ZOOM_ROUNDS = 3
    ZOOM_POINTS = 21

    def __init__(self, prob: "_Problem", plan: bool = True):
        self.prob = prob
        self.adj = _adjacency(prob)
        if plan:
            self.cut = self._cycle_cutset()
            free = [x for x in range(len(prob.ids)) if x not in self.cut]
            self.trees = self._forest(free)

    # ---- structure

    def _is_forest(self, nodes: set[int]) -> bool:
        edges = sum(1 for i, j, _, _ in self.prob.pairs if i in nodes and j in nodes)
        comps = 0
        seen: set[int] = set()
        for x in nodes:
            if x in seen:
                continue
            comps += 1
            stack = [x]
            seen.add(x)
            while stack:
                y = stack.pop()
                for z, _ in self.adj[y]:
                    if z in nodes and z not in seen:
                        seen.add(z)
                        stack.append(z)
        return edges == len(nodes) - comps

    def _cycle_cutset(self) -> tuple[int, ...]:
        n = len(self.prob.ids)
        order = sorted(range(n), key=lambda x: (-len(self.adj[x]), self.prob.ids[x]))
        for size in range(n):
            for cut in itertools.combinations(order, size):
                if self._is_forest(set(range(n)) - set(cut)):
                    return tuple(sorted(cut))
        return tuple(range(n))

    def _forest(self, free: list[int]):
        """Rooted trees over the free agents as (root, children map) tuples."""
        free_set = set(free)
        trees = []
        done: set[int] = set()
        for x in free:
            if x in done:
                continue
            comp = []
            stack = [x]
            done.add(x)
            while stack:
                y = stack.pop()
                comp.append(y)
                for z, _ in self.adj[y]:
                    if z in free_set and z not in done:
                        done.add(z)
                        stack.append(z)
            root = self._center(comp, free_set)
            children: dict[int, list[int]] = {y: [] for y in comp}
            stack = [root]
            seen = {root}
            while stack:
                y = stack.pop()
                for z, _ in sorted(self.adj[y]):
                    if z in free_set and z not in seen:
                        seen.add(z)
                        children[y].append(z)
                        stack.append(z)
            trees.append((root, children))
        return trees

    def _center(self, comp: list[int], free_set: set[int]) -> int:
        def height(r):
            depth = {r: 0}
            stack = [r]
            while stack:
                y = stack.pop()
                for z, _ in self.adj[y]:
                    if z in free_set and z not in depth:
                        depth[z] = depth[y] + 1
                        stack.append(z)
            return max(depth.values())
        return min(sorted(comp, key=lambda y: self.prob.ids[y]), key=height)

    # ---- vectorised pieces

    def pair_ok(self, k: int, a_i, a_j):
        i, j, di, dj = self.prob.pairs[k]
        ti, si = _times_vec(self.prob.v[i], di, a_i)
        tj, sj = _times_vec(self.prob.v[j], dj, a_j)
        with np.errstate(invalid="ignore"):
            gap = np.abs(ti - tj)
        gap_ok = np.where(np.isnan(gap), False, gap >= self.prob.params.tau_safe - _EPS)
        return si | sj | gap_ok

    def ok_with(self, x: int, vals, o: int, o_vals):
        """Pair feasibility with x's values ``vals`` against neighbour o."""
        for y, k in self.adj[x]:
            if y == o:
                i = self.prob.pairs[k][0]
                return self.pair_ok(k, vals, o_vals) if i == x else self.pair_ok(k, o_vals, vals)
        raise KeyError(o)

    def specials(self, x: int) -> list[float]:
        """Candidate values that are often exactly optimal for agent x."""
        p = self.prob.params
        out = [0.0, p.a_min, p.a_max]
        vx = self.prob.v[x]
        for o, k in self.adj[x]:
            i, j, di, dj = self.prob.pairs[k]
            dx, do = (di, dj) if i == x else (dj, di)
            if dx > 0:
                out.append(yield_accel(vx, dx))
            t_o = passage_time(self.prob.v[o], do, 0.0)
            for target in (t_o + p.tau_safe, t_o - p.tau_safe):
                a = accel_for_time(vx, dx, target) if dx > 0 else None
                if a is not None:
                    out.append(a)
        return [a for a in out if p.a_min - _EPS <= a <= p.a_max + _EPS]

    def grid(self, x: int, center: Optional[float] = None, width: Optional[float] = None, points: Optional[int] = None):
        p = self.prob.params
        if center is None:
            if points is None:
                points = min(int(round((p.a_max - p.a_min) / self.GRID_STEP)) + 1, self.MAX_AXIS)
            base = np.linspace(p.a_min, p.a_max, max(points, 2))
            extra = self.specials(x)
        else:
            lo, hi = max(p.a_min, center - width), min(p.a_max, center + width)
            base = np.linspace(lo, hi, self.ZOOM_POINTS)
            extra = [a for a in self.specials(x) if lo <= a <= hi] + [center]
        g = np.unique(np.concatenate([base, np.asarray(extra, dtype=float)]))
        return np.clip(g, p.a_min, p.a_max)

    def leaf(self, x: int, fixed: dict):
        """Exact best response of agent x given neighbour values (broadcast arrays)."""
        p = self.prob.params
        vx = self.prob.v[x]
        fixed = {o: fixed[o] for o, _ in self.adj[x] if o in fixed}
        shape = np.broadcast_shapes(*(np.shape(v) for v in fixed.values())) if fixed else ()
        cands = [np.zeros(shape)]
        for o, k in self.adj[x]:
            i, j, di, dj = self.prob.pairs[k]
            dx, do = (di, dj) if i == x else (dj, di)
            if dx > 0:
                cands.append(np.full(shape, yield_accel(vx, dx)))
            if o in fixed and dx > 0:
                t_o, _ = _times_vec(self.prob.v[o], do, fixed[o])
                cands.append(np.broadcast_to(_accel_for_time_vec(vx, dx, t_o + p.tau_safe), shape))
                cands.append(np.broadcast_to(_accel_for_time_vec(vx, dx, t_o - p.tau_safe), shape))
        cands.append(np.full(shape, p.a_min))
        cands.append(np.full(shape, p.a_max))
        c = np.stack(cands, axis=-1)
        ok = (c >= p.a_min - _EPS) & (c <= p.a_max + _EPS)
        c = np.clip(np.nan_to_num(c, nan=0.0), p.a_min, p.a_max)
        ok &= ~np.isnan(np.stack(cands, axis=-1))
        for o, o_vals in fixed.items():
            ok &= self.ok_with(x, c, o, np.asarray(o_vals)[..., None])
        cost = np.where(ok, np.abs(c), np.inf)
        idx = np.argmin(cost, axis=-1)
        best_cost = np.take_along_axis(cost, idx[..., None], axis=-1)[..., 0]
        best_val = np.take_along_axis(c, idx[..., None], axis=-1)[..., 0]
        return best_cost, best_val

    def node(self, x: int, children: dict, fixed: dict, grids: dict):
        """Subtree cost of x as a function of the neighbour values in ``fixed``.

        ``fixed`` holds the parent (if any) and conditioned agents. Returns
        (cost, value) arrays broadcast over those inputs.
        """
        kids = children[x]
        if not kids:
            return self.leaf(x, fixed)
        g = grids[x]
        fixed_e = {o: np.asarray(v)[..., None] for o, v in fixed.items()}
        shape = (1,) * max((np.ndim(v) for v in fixed_e.values()), default=1)
        g_b = g.reshape(shape[:-1] + (-1,))
        total = np.abs(g_b)
        for kid in kids:
            sub = {o: v for o, v in fixed_e.items() if o in self.cut}
            sub[x] = g_b
            kid_cost, _ = self.node(kid, children, sub, grids)
            total = total + kid_cost
        ok = np.ones(np.broadcast_shapes(np.shape(total), *(np.shape(v) for v in fixed_e.values())), dtype=bool)
        for o, v in fixed_e.items():
            if self._adjacent(x, o):
                ok &= self.ok_with(x, g_b, o, v)
        total = np.where(ok, total, np.inf)
        idx = np.argmin(total, axis=-1)
        cost = np.take_along_axis(total, idx[..., None], axis=-1)[..., 0]
        return cost, g[idx]

    def _adjacent(self, x: int, o: int) -> bool:
        return any(y == o for y, _ in self.adj[x])

    # ---- search

    def evaluate(self, cut_grids: dict, grids: dict):
        """Best completion for every combination of conditioned-agent values.

        Returns (total cost per combination, combination value arrays, and
        per-tree root cost arrays for seeding).
        """
        cut = list(self.cut)
        if cut:
            mesh = np.meshgrid(*(cut_grids[c] for c in cut), indexing="ij")
            cvals = {c: m.ravel() for c, m in zip(cut, mesh)}
            base = np.zeros(mesh[0].size)
            for c in cut:
                base = base + np.abs(cvals[c])
            for a, b in itertools.combinations(cut, 2):
                if self._adjacent(a, b):
                    base = np.where(self.ok_with(a, cvals[a], b, cvals[b]), base, np.inf)
        else:
            cvals = {}
            base = np.zeros(1)
        total = base.copy()
        for root, children in self.trees:
            fixed = {c: cvals[c] for c in cut if self._adjacent(root, c)}
            if not children[root]:
                cost, _ = self.leaf(root, fixed) if fixed else self.leaf(root, {})
                total = total + np.broadcast_to(cost, total.shape)
            else:
                g = grids[root]
                fixed_e = {c: v[:, None] for c, v in fixed.items()}
                g_b = g[None, :]
                rt = np.abs(g_b) + np.zeros((len(total), 1))
                for kid in children[root]:
                    sub = {c: v[:, None] for c, v in cvals.items()}
                    sub[root] = g_b
                    kc, _ = self.node(kid, children, sub, grids)
                    rt = rt + kc
                for c, v in fixed_e.items():
                    rt = np.where(self.ok_with(root, g_b, c, v), rt, np.inf)
                total = total + rt.min(axis=1)
        return total, cvals

    def reconstruct(self, cut_vals: dict, grids: dict) -> Optional[list[float]]:
        a = [0.0] * len(self.prob.ids)
        for c, v in cut_vals.items():
            a[c] = float(v)
        for root, children in self.trees:
            fixed = {c: np.array([cut_vals[c]]) for c in self.cut if self._adjacent(root, c)}
            if not children[root]:
                cost, val = self.leaf(root, fixed)
                if not np.isfinite(cost).all():
                    return None
                a[root] = float(np.ravel(val)[0])
                continue
            g = grids[root]
            rt = np.abs(g).astype(float)
            for kid in children[root]:
                sub = {c: np.full((1, 1), cut_vals[c]) for c in self.cut}
                sub[root] = g[None, :]
                kc, _ = self.node(kid, children, sub, grids)
                rt = rt + np.ravel(kc)
            for c in self.cut:
                if self._adjacent(root, c):
                    rt = np.where(self.ok_with(root, g, c, np.full(len(g), cut_vals[c])), rt, np.inf)
            k = int(np.argmin(rt))
            if not np.isfinite(rt[k]):
                return None
            a[root] = float(g[k])
            self._descend(root, children, a, grids)
        return a

    def _descend(self, x: int, children: dict, a: list, grids: dict) -> None:
        for kid in children[x]:
            fixed = {x: np.array([a[x]])}
            for c in self.cut:
                fixed[c] = np.array([a[c]])
            _, val = self.node(kid, children, fixed, grids)
            a[kid] = float(np.ravel(val)[0])
            self._descend(kid, children, a, grids)

    def grid_agents(self) -> list[int]:
        out = list(self.cut)
        for root, children in self.trees:
            out.extend(y for y, kids in children.items() if kids)
        return out

    def solve(self):
        prob = self.prob
        span = prob.params.a_max - prob.params.a_min
        gridded = self.grid_agents()
        n_cut = len(self.cut)
        n_grid = max(1, len(gridded))
        # Coarser grids when several agents are gridded jointly.
        per_axis = min(int(round(span / self.GRID_STEP)) + 1, self.MAX_AXIS)
        if n_cut or n_grid > 1:
            per_axis = min(per_axis, max(9, int(self.MAX_CELLS ** (1.0 / (n_cut + 1)))))
        grids = {x: self.grid(x, points=per_axis) for x in gridded}
        cut_grids = {c: grids[c] for c in self.cut}
        step = span / max(per_axis - 1, 1)

        total, cvals = self.evaluate(cut_grids, grids)
        order = np.argsort(total, kind="stable")
        seeds = []
        for b in order[: max(self.SEEDS * 4, 1)]:
            if not np.isfinite(total[b]):
                break
            cut_vals = {c: float(cvals[c][b]) for c in self.cut}
            sol = self.reconstruct(cut_vals, grids)
            if sol is None:
                continue
            if any(max(abs(sol[x] - s[x]) for x in gridded) < 2 * step for s in seeds) if gridded else seeds:
                continue
            seeds.append(sol)
            if len(seeds) >= self.SEEDS:
                break
        seeds.extend(self._alternatives(grids))
        unique = {}
        for seed in seeds:
            if prob.feasible(seed):
                unique.setdefault(tuple(round(x, 12) for x in seed), seed)
        if not unique:
            return None
        seeds = sorted(unique.values(), key=lambda s: sum(abs(x) for x in s))
        # Refinement can only recover a few grid steps per gridded agent.
        cutoff = sum(abs(x) for x in seeds[0]) + max(0.25, 4 * step * n_grid)

        candidates = []
        for seed in seeds:
            if sum(abs(x) for x in seed) > cutoff:
                break
            sol = self._zoom(seed, step, gridded)
            polished = _coordinate_descent(prob, sol, sweeps=20) if sol is not None else None
            for s in (seed, sol, polished):
                if s is not None and prob.feasible(s):
                    candidates.append((sum(abs(x) for x in s), s))
        best = None
        for cand in candidates:
            if _better(cand, best, prob):
                best = cand
        return best

    def _alternatives(self, grids: dict) -> list[list[float]]:
        """Extra seeds: each grid agent pinned at each of its special values."""
        out = []
        if self.cut:
            return out
        for root, children in self.trees:
            for val in self.specials(root):
                g = dict(grids)
                g[root] = np.array([val])
                sol = self.reconstruct({}, g)
                if sol is not None:
                    out.append(sol)
        return out

    def _zoom(self, seed: list[float], step: float, gridded: list[int]):
        if not gridded:
            return seed
        cur = list(seed)
        width = 2.0 * step
        for _ in range(self.ZOOM_ROUNDS):
            grids = {x: self.grid(x, center=cur[x], width=width) for x in gridded}
            cut_grids = {c: grids[c] for c in self.cut}
            total, cvals = self.evaluate(cut_grids, grids)
            b = int(np.argmin(total))
            if not np.isfinite(total[b]):
                break
            sol = self.reconstruct({c: float(cvals[c][b]) for c in self.cut}, grids)
            if sol is None:
                break
            if sum(abs(x) for x in sol) <= sum(abs(x) for x in cur) + 1e-12 or not self.prob.feasible(cur):
                cur = sol
            width /= 10.0
        return cur


def _best_response(prob: "_Problem", x: int, a: Sequence[float]) -> Optional[float]:
    """Feasible value of agent x closest to zero with all others fixed."""
    solver = _Solver(prob, plan=False)
    fixed = {o: np.array([a[o]]) for o, _ in solver.adj[x]}
    cost, val = solver.leaf(x, fixed)
    if not np.isfinite(cost[0]):
        return None
    return float(val[0])


def _adjacency(prob: "_Problem") -> dict[int, list[tuple[int, int]]]:
    adj: dict[int, list[tuple[int, int]]] = {x: [] for x in range(len(prob.ids))}
    for k, (i, j, _, _) in enumerate(prob.pairs):
        adj[i].append((j, k))
        adj[j].append((i, k))
    return adj


def _coordinate_descent(prob: "_Problem", start: Sequence[float], sweeps: int = 100) -> list[float]:
    """Cyclic coordinate descent with exact single-agent best responses."""
    a = list(start)
    for _ in range(sweeps):
        changed = False
        for x in range(len(a)):
            new = _best_response(prob, x, a)
            if new is not None and abs(new - a[x]) > 1e-12:
                a[x] = new
                changed = True
        if not changed:
            break
    return a


def _better(cand, best, prob: "_Problem") -> bool:
    """Objective first, then smaller max|a|, then delaying the larger track id."""
    if best is None:
        return True
    (obj_c, a_c), (obj_b, a_b) = cand, best
    if obj_c < obj_b - 1e-9:
        return True
    if obj_c > obj_b + 1e-9:
        return False
    mc, mb = max(abs(x) for x in a_c), max(abs(x) for x in a_b)
    if mc < mb - 1e-9:
        return True
    if mc > mb + 1e-9:
        return False
    order = sorted(range(len(prob.ids)), key=lambda k: prob.ids[k], reverse=True)
    for k in order:
        if a_c[k] < a_b[k] - 1e-9:
            return True
        if a_c[k] > a_b[k] + 1e-9:
            return False
    return False


def _solve_exact(prob: "_Problem"):
    zero = [0.0] * len(prob.ids)
    if prob.feasible(zero):
        return 0.0, zero
    return _Solver(prob).solve()


def _solve_approx(prob: "_Problem"):
    zero = [0.0] * len(prob.ids)
    if prob.feasible(zero):
        return 0.0, zero
    a = _coordinate_descent(prob, zero)
    if prob.feasible(a):
        return sum(abs(x) for x in a), a
    return None


def _finish(prob: _Problem, best, approximate: bool) -> MsaaSolution:
    if best is None:
        return MsaaSolution(
            accels={tid: 0.0 for tid in prob.ids}, objective=math.inf, feasible=False,
            key_agents=(), orderings={}, approximate=approximate,
        )
    obj, a = best
    accels = {tid: float(a[k]) for k, tid in enumerate(prob.ids)}
    ranked = sorted((tid for tid in prob.ids if abs(accels[tid]) > _EPS),
                    key=lambda tid: (-abs(accels[tid]), tid))
    orderings = {}
    for key, (ti, tj, yi, yj) in zip(prob.keys, prob.times(a)):
        if yi or yj:
            orderings[key] = YIELD
        else:
            orderings[key] = key[0] if ti <= tj else key[1]
    return MsaaSolution(accels, float(sum(abs(x) for x in a)), True, tuple(ranked), orderings, approximate)


def solve_chain(states: Sequence[AgentConflictState], pairs: Iterable, params: MsaaParams = MsaaParams()) -> MsaaSolution:
    """Minimise the summed absolute acceleration resolving every pair of a component."""
    prob = _build_problem(states, list(pairs), params)
    if len(prob.ids) > params.exact_agent_limit:
        return _finish(prob, _solve_approx(prob), approximate=True)
    return _finish(prob, _solve_exact(prob), approximate=False)


def solve_pair(sa: AgentConflictState, sb: AgentConflictState, pair, params: MsaaParams = MsaaParams()) -> MsaaSolution:
    return solve_chain([sa, sb], [pair], params)


def key_agents_of(solution: MsaaSolution, share: float = 0.9) -> tuple[str, ...]:
    """Agents whose effort is within 10% of the largest one."""
    if not solution.feasible or not solution.key_agents:
        return ()
    top = abs(solution.accels[solution.key_agents[0]])
    return tuple(tid for tid in solution.key_agents if abs(solution.accels[tid]) >= share * top - _EPS)


def intensity_at(component, states: Sequence[AgentConflictState], params: MsaaParams = MsaaParams()):
    """(MSAA value, key agents) for one component; infeasible ones are capped."""
    by_id = {s.track_id: s for s in states}
    missing = set(component.agent_ids) - set(by_id)
    if missing:
        raise ComponentError(f"no conflict state for {sorted(missing)}")
    sol = solve_chain([by_id[t] for t in component.agent_ids], component.pairs, params)
    if not sol.feasible:
        return params.infeasible_cap, ()
    return sol.objective, key_agents_of(sol)
