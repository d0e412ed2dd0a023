"""Figures written next to the tabular command outputs.

Everything renders through the Agg backend straight to files; nothing is shown.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_zcount_histogram(counts, path, title: str = "Z-count distribution") -> Path:
    """Histogram of Z-counts on a log-count axis; the zero bin is drawn separately."""
    counts = np.asarray(counts)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        nonzero = counts[counts > 0]
        ax.bar([0], [np.sum(counts == 0)], width=0.8, color="0.6", label="zero")
        if nonzero.size:
            edges = np.unique(np.geomspace(1, nonzero.max() + 1, num=30).astype(int))
            ax.hist(nonzero, bins=edges, color="tab:blue", label="nonzero")
            ax.set_xscale("symlog", linthresh=1)
        ax.set_yscale("log")
        ax.set_xlabel("Z-count")
        ax.set_ylabel("training triples")
        ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def plot_training_trace(epochs, path) -> Path:
    """Pacing lambda and mean loss per epoch, on twin axes."""
    t = [e.epoch for e in epochs]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.0))
        ax.plot(t, [e.lam for e in epochs], color="tab:green", drawstyle="steps-post")
        ax.set_xlabel("epoch")
        ax.set_ylabel("available fraction", color="tab:green")
        ax.set_ylim(0, 1.05)
        ax2 = ax.twinx()
        ax2.plot(t, [e.loss for e in epochs], color="tab:red", lw=1)
        ax2.set_ylabel("mean loss", color="tab:red")
        ax2.spines["right"].set_visible(True)
        return _save(fig, path)


def plot_diagnosis(diagnosis, path) -> Path:
    """Mean Z-count of triples ranked inside vs. outside the top 10."""
    labels = [f"top-10\n(n={diagnosis.n_top10})", f"bottom-10\n(n={diagnosis.n_bottom10})"]
    values = [diagnosis.avg_z_top10, diagnosis.avg_z_bottom10]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.2, 3.0))
        heights = [0.0 if v is None else v for v in values]
        bars = ax.bar(labels, heights, color=["tab:blue", "tab:orange"], width=0.6)
        for bar, v in zip(bars, values):
            text = "empty" if v is None else f"{v:.2f}"
            ax.annotate(text, (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                        ha="center", va="bottom", fontsize=8)
        ax.set_ylabel("mean Z-count")
        return _save(fig, path)
