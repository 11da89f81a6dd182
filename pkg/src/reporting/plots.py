"""
Reward-curve figures for refinement runs.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

# Headless backend before pyplot is imported.
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .metrics import MetricsTable, read_metrics_csv, smoothed  # noqa: E402

logger = logging.getLogger(__name__)


def plot_reward_curves(
    csv_paths: str | Path | Sequence[str | Path],
    png_path: str | Path,
    window: int = 10,
    labels: Sequence[str] | None = None,
) -> Path:
    """
    Plot mean reward and reward variance against iteration.

    Args:
        csv_paths: One metrics CSV, or several runs to overlay (seeds, ablations)
        png_path: Output image path
        window: Trailing smoothing window
        labels: Legend entries; file stems by default

    Returns:
        Path of the written figure
    """
    paths = [Path(csv_paths)] if isinstance(csv_paths, (str, Path)) else [Path(p) for p in csv_paths]
    labels = list(labels) if labels is not None else [p.stem for p in paths]
    tables: list[MetricsTable] = [read_metrics_csv(p) for p in paths]

    fig, (ax_r, ax_v) = plt.subplots(1, 2, figsize=(12, 4.5))
    for table, label in zip(tables, labels):
        it = table.column("iteration")
        reward = table.column("mean_reward")
        var = table.column("reward_var")
        line = ax_r.plot(it, smoothed(reward, window), label=label)[0]
        ax_r.plot(it, reward, color=line.get_color(), alpha=0.2)
        ax_v.plot(it, smoothed(var, window), color=line.get_color(), label=label)

    ax_r.set_title("Average reward")
    ax_r.set_xlabel("Iteration")
    ax_r.set_ylabel("Mean composite reward")
    ax_r.grid(True, alpha=0.3)
    ax_v.set_title("Reward variance")
    ax_v.set_xlabel("Iteration")
    ax_v.set_ylabel("Within-group variance")
    ax_v.grid(True, alpha=0.3)
    if len(tables) > 1:
        ax_r.legend()

    plt.tight_layout()
    out = Path(png_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    plt.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    logger.info(f"Reward curves saved to {out}")
    return out


def plot_loss_curve(csv_path: str | Path, png_path: str | Path, window: int = 25) -> Path:
    """Pretraining loss with its trailing average."""
    table = read_metrics_csv(csv_path)
    step = table.column("step")
    loss = table.column("loss")
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(step, loss, alpha=0.25, color="#569CD6")
    ax.plot(step, smoothed(loss, window), color="#569CD6")
    ax.set_yscale("log")
    ax.set_title("Cold-start loss")
    ax.set_xlabel("Step")
    ax.set_ylabel("MSE")
    ax.grid(True, alpha=0.3)
    plt.tight_layout()
    out = Path(png_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    plt.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out
