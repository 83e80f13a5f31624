"""Matplotlib renderings saved next to the delimited outputs.

Uses the Agg backend so rendering works headless; figures carry no
timestamps, keeping output files stable across identical runs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

import numpy as np

from .metrics import MetricsReport


def save_score_curve(sorted_scores: np.ndarray, cutoff_k: int | None, path: str | Path) -> None:
    """Ranked-score curve with the elbow cutoff marked."""
    s = np.asarray(sorted_scores, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(np.arange(1, len(s) + 1), s, lw=1.5, color="#1f6fb4")
    if cutoff_k is not None:
        ax.axvline(cutoff_k, color="#c0392b", ls="--", lw=1.2, label=f"cutoff k = {cutoff_k}")
        ax.legend(loc="upper right", frameon=False)
    ax.set_xlabel("rank")
    ax.set_ylabel("score")
    ax.set_title("Ranked feature scores")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_metrics_bars(reports: list[MetricsReport], path: str | Path) -> None:
    """Grouped bars: the four metrics per evaluation split."""
    names = ("accuracy", "precision", "recall", "f1")
    splits = [r.split for r in reports]
    width = 0.8 / len(names)
    x = np.arange(len(splits))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for j, name in enumerate(names):
        vals = [100.0 * getattr(r, name) for r in reports]
        ax.bar(x + (j - (len(names) - 1) / 2) * width, vals, width=width, label=name)
    ax.set_xticks(x)
    ax.set_xticklabels(splits)
    ax.set_ylabel("percent")
    ax.set_ylim(0, 105)
    ax.set_title("Metrics by split")
    ax.legend(ncol=4, loc="lower right", frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
