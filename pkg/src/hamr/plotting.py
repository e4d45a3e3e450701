"""Figures written next to the report CSV files. Uses the non-interactive Agg backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

FIG_SIZE = (5.0, 3.2)
DPI = 120


def plot_quartiles(mean_f1: dict, path, title: str = "Mean per-label F1 by frequency quartile") -> Path:
    """Bar chart of ``{"Q1": f1, ...}``; absent quartiles are drawn empty."""
    names = list(mean_f1)
    values = [mean_f1[q] if mean_f1[q] is not None else 0.0 for q in names]
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    bars = ax.bar(names, values, color="#4c72b0")
    for bar, q in zip(bars, names):
        label = "n/a" if mean_f1[q] is None else f"{mean_f1[q]:.3f}"
        ax.annotate(label, (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                    ha="center", va="bottom", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_xlabel("quartile (Q1 = rarest labels)")
    ax.set_ylabel("mean F1")
    ax.set_title(title, fontsize=10)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def plot_history(history: list[dict], path) -> Path:
    """Train loss and validation macro/micro F1 per epoch."""
    epochs = [h["epoch"] for h in history]
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    ax.plot(epochs, [h["train_loss"] for h in history], "o-", color="#c44e52", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("train loss")
    if history and "valid_macro_f1" in history[0]:
        ax2 = ax.twinx()
        ax2.plot(epochs, [h["valid_macro_f1"] for h in history], "s-", color="#4c72b0", label="valid macro F1")
        ax2.plot(epochs, [h["valid_micro_f1"] for h in history], "^--", color="#55a868", label="valid micro F1")
        ax2.set_ylim(0, 1)
        ax2.set_ylabel("F1")
        lines = ax.get_lines() + ax2.get_lines()
        ax.legend(lines, [ln.get_label() for ln in lines], fontsize=7, loc="center right")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path
