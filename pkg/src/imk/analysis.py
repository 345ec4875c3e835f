"""Behavioral statistics over typed-phrase datasets.

Three products, all exportable as plot-ready CSV tables:

* per-(participant, character) position means and standard deviations,
* the standard-score drift series over typing index t, averaging
  (x - mean) / sigma across all participant/character pairs still active
  at index t,
* mental-model scale and offset statistics, where a participant's
  space-to-'p' distance in their first qualifying sentence defines
  scale 1 and the offset is the drift of the mean touch position between
  the first 10 and last 10 inputs of their session.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import TypedPhrase

OFFSET_WINDOW = 10  # inputs averaged at each end of a session
Z_PLOT_CUTOFF = 4.0  # standard scores above this are cut from plots


@dataclass(frozen=True)
class CharEntry:
    mean_x: float
    mean_y: float
    sigma_x: float
    sigma_y: float
    count: int


@dataclass(frozen=True)
class CharPositionStats:
    """Raw-pixel mean/sigma per (participant, character).

    Sigmas are population standard deviations; characters a participant
    never typed are simply absent.
    """

    entries: dict[tuple[str, str], CharEntry]

    def __getitem__(self, key: tuple[str, str]) -> CharEntry:
        return self.entries[key]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class ZSeries:
    """Mean standard score per typing index t (1-based).

    ``counts[t-1]`` is the number of (participant, character) pairs
    contributing at index t; pairs with zero sigma on either axis are
    excluded throughout.
    """

    z_x: tuple[float, ...]
    z_y: tuple[float, ...]
    counts: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    std: float
    min: float
    max: float
    n: int


@dataclass(frozen=True)
class ScaleOffsetStats:
    """Aggregate of mental-model scale and offset samples.

    Keyed by (metric, axis) with metric in {"scale", "offset"} and axis in
    {"x", "y"}; scale is unitless, offset in pixels.
    """

    stats: dict[tuple[str, str], SummaryStats]

    def __getitem__(self, key: tuple[str, str]) -> SummaryStats:
        return self.stats[key]


def _observations(data: Sequence[TypedPhrase]) -> dict[tuple[str, str], list[tuple[float, float]]]:
    """Ordered (x, y) observations per (participant, character).

    Session order is phrase order in the dataset, then point order within
    each phrase.
    """
    obs: dict[tuple[str, str], list[tuple[float, float]]] = {}
    for phrase in data:
        pid = phrase.meta.participant_id
        for ch, p in zip(phrase.phrase.lower(), phrase.points):
            obs.setdefault((pid, ch), []).append((p.x, p.y))
    return obs


def char_position_stats(data: Sequence[TypedPhrase]) -> CharPositionStats:
    if not data:
        raise ValueError("no data")
    entries = {}
    for key, pts in _observations(data).items():
        arr = np.asarray(pts, dtype=np.float64)
        mean = arr.mean(axis=0)
        sigma = arr.std(axis=0)  # population std
        entries[key] = CharEntry(
            mean_x=float(mean[0]),
            mean_y=float(mean[1]),
            sigma_x=float(sigma[0]),
            sigma_y=float(sigma[1]),
            count=len(pts),
        )
    return CharPositionStats(entries)


def z_series(data: Sequence[TypedPhrase], stats: CharPositionStats) -> ZSeries:
    """Standard-score drift over typing index, per the indicator-weighted
    average: a pair contributes at index t iff it has at least t
    occurrences and non-zero sigma on both axes."""
    obs = _observations(data)
    active = {k: v for k, v in obs.items() if stats[k].sigma_x > 0 and stats[k].sigma_y > 0}
    if not active:
        return ZSeries((), (), ())
    max_t = max(len(v) for v in active.values())
    z_x, z_y, counts = [], [], []
    for t in range(max_t):
        sx = sy = 0.0
        n = 0
        for key, pts in active.items():
            if len(pts) < t + 1:
                continue
            e = stats[key]
            sx += (pts[t][0] - e.mean_x) / e.sigma_x
            sy += (pts[t][1] - e.mean_y) / e.sigma_y
            n += 1
        z_x.append(sx / n)
        z_y.append(sy / n)
        counts.append(n)
    return ZSeries(tuple(z_x), tuple(z_y), tuple(counts))


def _mean_char_position(phrase: TypedPhrase, ch: str) -> np.ndarray | None:
    pts = [(p.x, p.y) for c, p in zip(phrase.phrase.lower(), phrase.points) if c == ch]
    if not pts:
        return None
    return np.asarray(pts, dtype=np.float64).mean(axis=0)


def scale_offset_samples(data: Sequence[TypedPhrase]) -> dict[tuple[str, str], list[float]]:
    """Raw per-sample scale ratios and per-participant offsets.

    Scale: per qualifying sentence (contains both 'p' and space), the
    space-to-'p' distance per axis divided by the same distance in the
    participant's first qualifying sentence. Sentences whose first-sentence
    distance is zero on an axis yield no samples for that axis.

    Offset: mean position of the first 10 session inputs minus the mean of
    the last 10; participants with fewer than 20 inputs are excluded.
    """
    by_participant: dict[str, list[TypedPhrase]] = {}
    for phrase in data:
        by_participant.setdefault(phrase.meta.participant_id, []).append(phrase)

    samples: dict[tuple[str, str], list[float]] = {
        ("scale", "x"): [],
        ("scale", "y"): [],
        ("offset", "x"): [],
        ("offset", "y"): [],
    }
    for phrases in by_participant.values():
        deltas = []
        for phrase in phrases:
            p_pos = _mean_char_position(phrase, "p")
            sp_pos = _mean_char_position(phrase, " ")
            if p_pos is None or sp_pos is None:
                continue
            deltas.append(p_pos - sp_pos)
        if deltas:
            first = deltas[0]
            for axis, idx in (("x", 0), ("y", 1)):
                if first[idx] == 0.0:
                    continue
                samples[("scale", axis)].extend(d[idx] / first[idx] for d in deltas)

        session = [(p.x, p.y) for phrase in phrases for p in phrase.points]
        if len(session) >= 2 * OFFSET_WINDOW:
            arr = np.asarray(session, dtype=np.float64)
            drift = arr[:OFFSET_WINDOW].mean(axis=0) - arr[-OFFSET_WINDOW:].mean(axis=0)
            samples[("offset", "x")].append(float(drift[0]))
            samples[("offset", "y")].append(float(drift[1]))
    return samples


def scale_offset_stats(data: Sequence[TypedPhrase]) -> ScaleOffsetStats:
    stats = {}
    for key, values in scale_offset_samples(data).items():
        if not values:
            continue
        arr = np.asarray(values, dtype=np.float64)
        stats[key] = SummaryStats(
            mean=float(arr.mean()),
            std=float(arr.std()),
            min=float(arr.min()),
            max=float(arr.max()),
            n=len(values),
        )
    return ScaleOffsetStats(stats)


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def export_analysis(
    stats: CharPositionStats,
    zseries: ZSeries,
    so_stats: ScaleOffsetStats,
    out_dir: str | Path,
) -> list[Path]:
    """Write char_stats.csv, z_series.csv and scale_offset.csv.

    Ordering and float formatting are deterministic: identical inputs
    produce byte-identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    path = out / "char_stats.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["participant", "char", "mean_x", "mean_y", "sigma_x", "sigma_y", "count"])
        for (pid, ch) in sorted(stats.entries):
            e = stats[(pid, ch)]
            w.writerow([pid, ch, _fmt(e.mean_x), _fmt(e.mean_y), _fmt(e.sigma_x), _fmt(e.sigma_y), e.count])
    paths.append(path)

    path = out / "z_series.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "z_x", "z_y", "count"])
        for i in range(len(zseries)):
            w.writerow([i + 1, _fmt(zseries.z_x[i]), _fmt(zseries.z_y[i]), zseries.counts[i]])
    paths.append(path)

    path = out / "scale_offset.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "axis", "mean", "std", "min", "max", "n"])
        for (metric, axis) in sorted(so_stats.stats):
            s = so_stats[(metric, axis)]
            w.writerow([metric, axis, _fmt(s.mean), _fmt(s.std), _fmt(s.min), _fmt(s.max), s.n])
    paths.append(path)
    return paths
