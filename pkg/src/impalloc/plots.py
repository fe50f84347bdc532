"""Report figures, written straight to image files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_run(report, path, title=None):
    """Cumulative revenue and per-frame revenue of one simulated run."""
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    frames = np.array(report.frames)
    revenue = np.array(report.revenue_series)
    top.plot(frames, np.cumsum(revenue), color="tab:blue")
    top.set_ylabel("cumulative revenue")
    bottom.bar(frames, revenue, width=1.0, color="tab:gray")
    bottom.set_ylabel("revenue per frame")
    bottom.set_xlabel("frame")
    fig.suptitle(title or f"{report.policy}, seed {report.seed}")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_comparison(comparison, path, title="revenue by policy"):
    """Mean revenue per policy with one standard deviation, plus per-seed points."""
    names = list(comparison.revenues)
    fig, ax = plt.subplots(figsize=(6, 4))
    x = np.arange(len(names))
    ax.bar(x, [comparison.mean(n) for n in names], yerr=[comparison.std(n) for n in names],
           color="tab:blue", alpha=0.6, capsize=4)
    for idx, n in enumerate(names):
        ax.scatter(np.full(len(comparison.revenues[n]), idx), comparison.revenues[n], color="k", s=8)
    ax.set_xticks(x, names)
    ax.set_ylabel("total revenue")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_projection(times, actual, predicted, path, title="supply forecast"):
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.plot(times, actual, label="actual", color="k", lw=1)
    for name, values in predicted.items():
        ax.plot(times, values, label=name, lw=1)
    ax.set_ylabel("impressions per frame")
    ax.legend()
    ax.set_title(title)
    fig.autofmt_xdate()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
