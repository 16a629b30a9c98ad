"""Figure emission: field maps, loss curves and bar charts (Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_field(field, path, grid=None, title=None):
    """Map of a (H, W) field with its maximum marked. Returns the argmax (row, col)."""
    f = np.asarray(field, float)
    row, col = np.unravel_index(np.argmax(f), f.shape)
    fig, ax = plt.subplots(figsize=(6, 3.2))
    im = ax.imshow(f, origin="lower", aspect="auto")
    if grid is not None:
        ax.set_ylabel("row (lat %.1f..%.1f)" % (grid.latitudes[0], grid.latitudes[-1]))
    ax.plot(col, row, marker="x", color="red", markersize=9)
    fig.colorbar(im, ax=ax)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=90)
    plt.close(fig)
    return int(row), int(col)


def plot_loss_curves(history, path, title=None):
    train = [(h["step"], h["loss"]) for h in history if h.get("loss") is not None]
    steps, losses = (list(x) for x in zip(*train)) if train else ([], [])
    val = [(h["step"], h["val_loss"]) for h in history if h.get("val_loss") is not None]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(steps, losses, label="train")
    if val:
        ax.plot(*zip(*val), "o-", label="validation")
    if losses and min(losses) > 0:
        ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=90)
    plt.close(fig)


def plot_bars(labels, values, path, ylabel="RMSE", title=None):
    fig, ax = plt.subplots(figsize=(max(4, 0.9 * len(labels) + 1), 3.2))
    ax.bar(range(len(values)), values)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels([str(x) for x in labels], rotation=30, ha="right")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=90)
    plt.close(fig)
