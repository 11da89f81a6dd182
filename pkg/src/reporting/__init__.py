"""
Metrics files, convergence summaries and reward-curve plots.
"""

from .metrics import (
    PRETRAIN_COLUMNS,
    RPO_COLUMNS,
    MetricsTable,
    MetricsWriter,
    WindowSummary,
    read_metrics_csv,
    smoothed,
    window_summary,
)
from .plots import plot_loss_curve, plot_reward_curves

__all__ = [
    "PRETRAIN_COLUMNS",
    "RPO_COLUMNS",
    "MetricsTable",
    "MetricsWriter",
    "WindowSummary",
    "plot_loss_curve",
    "plot_reward_curves",
    "read_metrics_csv",
    "smoothed",
    "window_summary",
]
