"""Summary statistics over an interaction event catalog."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import InterMineError, ZeroScenes
from .events import InteractionEvent

# Row label plus the five value columns of the summary table.
TABLE_COLUMNS = (
    "dataset", "events", "intensity_mean_mps2", "agents", "duration_mean_s", "min_pet_mean_s",
)


def _edges(lo: float, hi: float, step: float) -> tuple[float, ...]:
    n = int(round((hi - lo) / step))
    return tuple(round(lo + k * step, 10) for k in range(n + 1))


@dataclass(frozen=True)
class BinSpec:
    duration: tuple[float, ...] = _edges(0.0, 6.0, 0.25)
    intensity: tuple[float, ...] = _edges(0.0, 6.0, 0.25)
    pet: tuple[float, ...] = _edges(0.0, 6.0, 0.25)
    participants: tuple[float, ...] = tuple(float(k) for k in range(2, 12))

    def __post_init__(self):
        for name in ("duration", "intensity", "pet", "participants"):
            edges = getattr(self, name)
            if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
                raise InterMineError(f"{name} bin edges must be strictly increasing")


@dataclass(frozen=True)
class Histogram:
    edges: tuple[float, ...]
    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.counts)


def histogram(values: Iterable[float], edges: Sequence[float]) -> Histogram:
    """Half-open bins [lo, hi); values outside the range land in the edge bins."""
    edges = tuple(float(e) for e in edges)
    vals = np.asarray(list(values), dtype=float)
    idx = np.searchsorted(np.asarray(edges), vals, side="right") - 1
    idx = np.clip(idx, 0, len(edges) - 2)
    counts = np.bincount(idx, minlength=len(edges) - 1) if len(vals) else np.zeros(len(edges) - 1, int)
    return Histogram(edges, tuple(int(c) for c in counts))


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values) if values else 0.0


@dataclass(frozen=True)
class CatalogSummary:
    n_events: int
    mean_intensity: float
    total_agents: int
    mean_duration_s: float
    mean_min_pet_s: Optional[float]
    n_two_agent: int
    n_multi_agent: int
    histograms: dict = field(default_factory=dict)


def summarize(catalog: Sequence[InteractionEvent], bins: BinSpec = BinSpec()) -> CatalogSummary:
    pets = [e.min_pet for e in catalog if e.min_pet is not None]
    return CatalogSummary(
        n_events=len(catalog),
        mean_intensity=_mean([e.intensity_mean for e in catalog]),
        total_agents=sum(e.n_agents for e in catalog),
        mean_duration_s=_mean([e.duration_s for e in catalog]),
        mean_min_pet_s=_mean(pets) if pets else None,
        n_two_agent=sum(1 for e in catalog if e.n_agents == 2),
        n_multi_agent=sum(1 for e in catalog if e.n_agents >= 3),
        histograms={
            "duration": histogram([e.duration_s for e in catalog], bins.duration),
            "intensity": histogram([e.intensity_mean for e in catalog], bins.intensity),
            "pet": histogram(pets, bins.pet),
            "participants": histogram([e.n_agents for e in catalog], bins.participants),
        },
    )


def proportions(catalog: Sequence[InteractionEvent], scene_count: int) -> tuple[float, float]:
    """Share of scenes with a two-agent event, and with a multi-agent event."""
    if scene_count <= 0:
        raise ZeroScenes("scene_count must be positive")
    scenes = {e.scene_id for e in catalog}
    if len(scenes) > scene_count:
        raise InterMineError(f"catalog spans {len(scenes)} scenes but scene_count is {scene_count}")
    two = {e.scene_id for e in catalog if e.n_agents == 2}
    multi = {e.scene_id for e in catalog if e.n_agents >= 3}
    return len(two) / scene_count, len(multi) / scene_count


def table_rows(catalog: Sequence[InteractionEvent]) -> list[dict]:
    """One row per dataset tag plus an ``all`` row; duration and PET are means."""
    groups: dict[str, list[InteractionEvent]] = {}
    for e in catalog:
        groups.setdefault(e.dataset_tag or "-", []).append(e)
    rows = []
    for tag in sorted(groups) + ["all"]:
        events = catalog if tag == "all" else groups[tag]
        s = summarize(events)
        rows.append({
            "dataset": tag,
            "events": s.n_events,
            "intensity_mean_mps2": s.mean_intensity,
            "agents": s.total_agents,
            "duration_mean_s": s.mean_duration_s,
            "min_pet_mean_s": s.mean_min_pet_s,
        })
    return rows


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value)


def table_text(catalog: Sequence[InteractionEvent]) -> str:
    rows = [[_cell(r[c]) for c in TABLE_COLUMNS] for r in table_rows(catalog)]
    widths = [max(len(c), *(len(r[k]) for r in rows)) for k, c in enumerate(TABLE_COLUMNS)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(TABLE_COLUMNS, widths))]
    for r in rows:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
    return "\n".join(line.rstrip() for line in lines) + "\n"


def table_csv(catalog: Sequence[InteractionEvent]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS)
    for r in table_rows(catalog):
        writer.writerow(["" if r[c] is None else repr(r[c]) if isinstance(r[c], float) else r[c]
                         for c in TABLE_COLUMNS])
    return buf.getvalue()


def histogram_csv(h: Histogram) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["lo", "hi", "count"])
    for lo, hi, n in zip(h.edges, h.edges[1:], h.counts):
        writer.writerow([repr(lo), repr(hi), n])
    return buf.getvalue()
