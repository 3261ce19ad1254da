"""Rendering: training-rate curves, per-quantity density histograms, and
2-D joint distributions, written straight to image files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .data import (
    DEFAULT_BINS,
    SchemaError,
    concat_trajectories,
    density_histogram,
    load_csv_columns,
)

RATE_COLUMNS = ["step", "arrival_rate", "collision_rate"]
HIST_QUANTITIES = {
    "y_err": "lateral tracking error [m]",
    "phi_err": "heading tracking error [rad]",
    "a_x": "longitudinal acceleration [m/s^2]",
    "delta": "steering angle [rad]",
}
JOINT_PAIRS = [("a_x", "v_x"), ("delta", "phi_err")]


def plot_curves(
    metrics_csvs: list, labels: list[str], out_path: str | Path
) -> Path:
    """Overlay arrival- and collision-rate curves for one or more runs."""
    if len(metrics_csvs) != len(labels):
        raise ValueError("one label per input CSV is required")
    runs = [load_csv_columns(p, RATE_COLUMNS) for p in metrics_csvs]
    fig, (ax_arr, ax_col) = plt.subplots(1, 2, figsize=(10, 4))
    for run, label in zip(runs, labels):
        keep = ~np.isnan(run["arrival_rate"])
        ax_arr.plot(run["step"][keep], run["arrival_rate"][keep], label=label)
        keep = ~np.isnan(run["collision_rate"])
        ax_col.plot(run["step"][keep], run["collision_rate"][keep], label=label)
    ax_arr.set_xlabel("training step")
    ax_arr.set_ylabel("arrival rate")
    ax_col.set_xlabel("training step")
    ax_col.set_ylabel("collision rate")
    ax_arr.legend()
    ax_col.legend()
    for ax in (ax_arr, ax_col):
        ax.set_ylim(-0.02, 1.02)
        ax.grid(alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_histograms(
    trajectory_csvs: list,
    out_dir: str | Path,
    bins: int = DEFAULT_BINS,
    quantities: dict | None = None,
) -> list[Path]:
    """Density histograms for the tracking-error and action columns."""
    quantities = quantities or HIST_QUANTITIES
    data = concat_trajectories(trajectory_csvs, list(quantities))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for col, xlabel in quantities.items():
        density, edges = density_histogram(data[col], bins=bins)
        centers = 0.5 * (edges[:-1] + edges[1:])
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.bar(centers, density, width=np.diff(edges), alpha=0.85)
        mu, sd = float(np.mean(data[col])), float(np.std(data[col]))
        ax.set_xlabel(xlabel)
        ax.set_ylabel("probability density")
        ax.set_title(f"mean {mu:.4f}, std {sd:.4f}")
        ax.grid(alpha=0.3)
        fig.tight_layout()
        path = out_dir / f"hist_{col}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def plot_joint(
    trajectory_csvs: list,
    out_dir: str | Path,
    bins: int = DEFAULT_BINS,
    pairs: list | None = None,
) -> list[Path]:
    """2-D joint density maps for the published quantity pairings."""
    pairs = pairs or JOINT_PAIRS
    cols = sorted({c for pair in pairs for c in pair})
    data = concat_trajectories(trajectory_csvs, cols)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for cx, cy in pairs:
        fig, ax = plt.subplots(figsize=(5, 4))
        h = ax.hist2d(data[cx], data[cy], bins=bins, density=True, cmap="viridis")
        fig.colorbar(h[3], ax=ax, label="density")
        ax.set_xlabel(cx)
        ax.set_ylabel(cy)
        fig.tight_layout()
        path = out_dir / f"joint_{cx}_vs_{cy}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written
