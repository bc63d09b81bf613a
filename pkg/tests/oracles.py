"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import math

import numpy as np

from intermine import mtl


# ------------------------------------------------------------------ passage times

def simulate_passage(v: float, d: float, a: float, h: float = 1e-4, t_max: float = 60.0) -> float:
    """Passage time by explicit integration of max(0, v + a t)."""
    if d <= 0:
        return 0.0
    t = np.arange(0.0, t_max, h)
    speed = np.maximum(0.0, v + a * t)
    travelled = np.concatenate(([0.0], np.cumsum((speed[1:] + speed[:-1]) / 2 * h)))
    idx = np.nonzero(travelled >= d - 1e-9)[0]
    return math.inf if len(idx) == 0 else float(t[idx[0]])


def _times(v, d, a):
    a = np.asarray(a, dtype=float)
    disc = v * v + 2 * a * d
    stop = disc <= 1e-12 * max(1.0, v * v)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = 2 * d / (v + np.sqrt(np.maximum(disc, 0.0)))
    return np.where(stop, np.inf, t), stop


def pair_resolved(v_i, d_i, a_i, v_j, d_j, a_j, tau):
    ti, si = _times(v_i, d_i, a_i)
    tj, sj = _times(v_j, d_j, a_j)
    with np.errstate(invalid="ignore"):
        gap = np.abs(ti - tj)
    return si | sj | np.where(np.isnan(gap), False, gap >= tau - 1e-9)


def accel_grid(h: float, a_min: float = -8.0, a_max: float = 5.0) -> np.ndarray:
    n = int(round((a_max - a_min) / h))
    return a_min + h * np.arange(n + 1)


def grid_pair(v, d, tau=3.0, h=0.01, a_min=-8.0, a_max=5.0) -> float:
    """Exhaustive 2-D grid minimum of |a_0| + |a_1|; inf if no grid point works."""
    g = accel_grid(h, a_min, a_max)
    ok = pair_resolved(v[0], d[0], g[:, None], v[1], d[1], g[None, :], tau)
    cost = np.abs(g)[:, None] + np.abs(g)[None, :]
    return float(np.min(np.where(ok, cost, np.inf)))


def _triple_search(v, pairs, tau, g0, g1, g2):
    grids = (g0, g1, g2)
    masks = {}
    for i, j, di, dj in pairs:
        masks[(i, j)] = pair_resolved(v[i], di, grids[i][:, None], v[j], dj, grids[j][None, :], tau)
    c12 = np.abs(g1)[:, None] + np.abs(g2)[None, :]
    best = np.full(len(g0), np.inf)
    for k, a0 in enumerate(g0):
        ok = np.ones((len(g1), len(g2)), dtype=bool)
        for (i, j), m in masks.items():
            if (i, j) == (0, 1):
                ok &= m[k][:, None]
            elif (i, j) == (0, 2):
                ok &= m[k][None, :]
            else:
                ok &= m
        if ok.any():
            best[k] = abs(a0) + c12[ok].min()
    return best


def grid_triple(v, pairs, tau=3.0, h=0.05, a_min=-8.0, a_max=5.0) -> float:
    """Exhaustive 3-D grid minimum; ``pairs`` holds (i, j, d_i, d_j) with i < j."""
    g = accel_grid(h, a_min, a_max)
    return float(_triple_search(v, pairs, tau, g, g, g).min())


def grid_triple_refined(v, pairs, tau=3.0, h=0.05, sub=10, margin=0.2, max_cells=300,
                        a_min=-8.0, a_max=5.0) -> tuple[float, float]:
    """(coarse grid minimum, minimum after refining near-optimal coarse cells).

    Each coarse point within ``margin`` of the best is re-searched on a
    ``h / sub`` lattice covering its neighbouring cells.
    """
    g = accel_grid(h, a_min, a_max)
    masks = {}
    for i, j, di, dj in pairs:
        masks[(i, j)] = pair_resolved(v[i], di, g[:, None], v[j], dj, g[None, :], tau)
    cost = np.full((len(g),) * 3, np.inf)
    absg = np.abs(g)
    c12 = absg[:, None] + absg[None, :]
    for k in range(len(g)):
        ok = np.ones((len(g), len(g)), dtype=bool)
        for (i, j), m in masks.items():
            if (i, j) == (0, 1):
                ok &= m[k][:, None]
            elif (i, j) == (0, 2):
                ok &= m[k][None, :]
            else:
                ok &= m
        cost[k] = np.where(ok, absg[k] + c12, np.inf)
    coarse = float(cost.min())
    if not math.isfinite(coarse):
        return coarse, coarse
    cells = np.argwhere(cost <= coarse + margin)
    order = np.argsort(cost[tuple(cells.T)], kind="stable")[:max_cells]
    best = coarse
    for ia, ib, ic in cells[order]:
        local = [np.clip(np.linspace(g[x] - h, g[x] + h, 2 * sub + 1), a_min, a_max) for x in (ia, ib, ic)]
        best = min(best, float(_triple_search(v, pairs, tau, *local).min()))
    return coarse, best


# ---------------------------------------------------------------------------- MTL

def brute_eval(f, traces, step):
    """Direct recursive semantics; any out-of-window read makes the result OUT_OF_WINDOW."""
    oow = mtl.OUT_OF_WINDOW
    if isinstance(f, mtl.Atom):
        return traces[f.name].at(step)
    if isinstance(f, mtl.Not):
        r = brute_eval(f.arg, traces, step)
        return oow if r is oow else not r
    if isinstance(f, (mtl.Globally, mtl.Eventually)):
        vals = [brute_eval(f.arg, traces, step + k) for k in range(f.lo, f.hi + 1)]
        if any(v is oow for v in vals):
            return oow
        return all(vals) if isinstance(f, mtl.Globally) else any(vals)
    left = brute_eval(f.left, traces, step)
    right = brute_eval(f.right, traces, step)
    if left is oow or right is oow:
        return oow
    if isinstance(f, mtl.And):
        return left and right
    if isinstance(f, mtl.Or):
        return left or right
    if isinstance(f, mtl.Implies):
        return (not left) or right
    return left == right


def random_formula(rng, names, max_depth, lo=-2, hi=4):
    if max_depth == 0 or rng.random() < 0.25:
        return mtl.Atom(str(rng.choice(names)))
    kind = rng.integers(0, 7)
    sub = lambda: random_formula(rng, names, max_depth - 1, lo, hi)  # noqa: E731
    if kind == 0:
        return mtl.Not(sub())
    if kind in (1, 2, 3, 4):
        cls = (mtl.And, mtl.Or, mtl.Implies, mtl.Iff)[kind - 1]
        return cls(sub(), sub())
    a, b = sorted(int(x) for x in rng.integers(lo, hi + 1, 2))
    cls = mtl.Globally if kind == 5 else mtl.Eventually
    return cls(a, b, sub())


# ---------------------------------------------------------------------------- PET

def pet_by_sampling(xy_a, xy_b, center, r_a, r_b, dt, substeps=2000):
    """PET from densely resampled linear motion between recorded steps."""
    def window(xy, r):
        xy = np.asarray(xy, dtype=float)
        s = np.linspace(0, len(xy) - 1, (len(xy) - 1) * substeps + 1)
        x = np.interp(s, np.arange(len(xy)), xy[:, 0])
        y = np.interp(s, np.arange(len(xy)), xy[:, 1])
        inside = np.hypot(x - center[0], y - center[1]) <= r
        idx = np.nonzero(inside)[0]
        if len(idx) == 0:
            return None
        return s[idx[0]] * dt, s[idx[-1]] * dt

    wa, wb = window(xy_a, r_a), window(xy_b, r_b)
    if wa is None or wb is None:
        return None
    first, second = sorted([wa, wb])
    return max(0.0, second[0] - first[1])
