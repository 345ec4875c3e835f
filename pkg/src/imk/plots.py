"""Figure rendering for the CLI report paths.

All figures are built from the same tables the CSV exports carry, and are
written as PNG files next to them. Headless-safe (Agg backend).
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import CharPositionStats, ScaleOffsetStats, Z_PLOT_CUTOFF, ZSeries
from .model.sancd import PixelMap


def plot_z_series(zseries: ZSeries, path: str | Path) -> Path:
    """Drift of the mean standard score over typing index; values above
    the cutoff are not drawn."""
    path = Path(path)
    t = np.arange(1, len(zseries) + 1)
    fig, ax = plt.subplots(figsize=(8, 4))
    for series, label in ((np.asarray(zseries.z_x), "z_x"), (np.asarray(zseries.z_y), "z_y")):
        clipped = np.where(series > Z_PLOT_CUTOFF, np.nan, series)
        ax.plot(t, clipped, label=label, linewidth=0.8)
    ax.set_xlabel("typing index t")
    ax.set_ylabel("mean standard score")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_key_centroids(stats: CharPositionStats, path: str | Path, chars: Sequence[str] = ("q", "p")) -> Path:
    """Per-participant mean positions of selected keys, one color per
    participant (y axis flipped to screen orientation)."""
    path = Path(path)
    participants = sorted({pid for pid, _ in stats.entries})
    cmap = plt.get_cmap("tab20")
    fig, axes = plt.subplots(1, len(chars), figsize=(5 * len(chars), 5), squeeze=False)
    for k, ch in enumerate(chars):
        ax = axes[0][k]
        for i, pid in enumerate(participants):
            e = stats.entries.get((pid, ch))
            if e is None:
                continue
            ax.scatter(e.mean_x, e.mean_y, s=18, color=cmap(i % 20))
        ax.set_title(f"mean {ch!r} position per participant")
        ax.set_xlabel("x (px)")
        ax.set_ylabel("y (px)")
        ax.invert_yaxis()
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_scale_offset(so_stats: ScaleOffsetStats, path: str | Path) -> Path:
    path = Path(path)
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    for ax, metric, unit in ((axes[0], "scale", ""), (axes[1], "offset", " (px)")):
        keys = [k for k in sorted(so_stats.stats) if k[0] == metric]
        if not keys:
            ax.set_visible(False)
            continue
        labels = [axis for _, axis in keys]
        means = [so_stats[k].mean for k in keys]
        stds = [so_stats[k].std for k in keys]
        ax.bar(labels, means, yerr=stds, capsize=4, color=["#4878d0", "#ee854a"])
        ax.set_title(f"{metric}{unit}: mean +/- std")
        ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_prediction_map(grid: PixelMap, path: str | Path) -> Path:
    """Pixel-wise predicted characters as colored cells with labels at the
    centroid of each character's region."""
    path = Path(path)
    arr = grid.indices
    fig, ax = plt.subplots(figsize=(6, 6 * grid.screen_h / max(grid.screen_w, 1)))
    ax.imshow(
        arr,
        cmap="tab20",
        interpolation="nearest",
        extent=(0, grid.cols * grid.step, grid.rows * grid.step, 0),
    )
    for idx in np.unique(arr):
        ys, xs = np.nonzero(arr == idx)
        ch = grid.chars[ys[0]][xs[0]]
        label = ch if len(ch) == 1 and ch != " " else {" ": "sp"}.get(ch, "?")
        ax.text(
            (xs.mean() + 0.5) * grid.step,
            (ys.mean() + 0.5) * grid.step,
            label,
            ha="center",
            va="center",
            fontsize=9,
            fontweight="bold",
        )
    ax.set_xlabel("x (px)")
    ax.set_ylabel("y (px)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_history(history: Sequence[dict], path: str | Path) -> Path:
    """Training loss and validation accuracy per epoch."""
    path = Path(path)
    epochs = [h["epoch"] for h in history]
    fig, ax1 = plt.subplots(figsize=(8, 4))
    ax1.plot(epochs, [h["train_loss"] for h in history], color="#4878d0", label="train loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss", color="#4878d0")
    ax2 = ax1.twinx()
    ax2.plot(epochs, [h["val_acc"] for h in history], color="#ee854a", label="val accuracy")
    ax2.set_ylabel("val accuracy", color="#ee854a")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def write_history_csv(history: Sequence[dict], path: str | Path) -> Path:
    import csv

    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "phase", "train_loss", "val_acc"])
        for h in history:
            w.writerow([h["epoch"], h["phase"], repr(float(h["train_loss"])), repr(float(h["val_acc"]))])
    return path
