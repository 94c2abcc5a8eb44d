"""Matplotlib figure rendering for training and evaluation reports.

All entry points write PNG files next to the delimited report outputs; the
Agg backend keeps everything headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_loss_curves(reports: list[dict], out_path: str | Path) -> Path:
    """Loss trajectories from a list of per-step report dicts."""
    out_path = Path(out_path)
    steps = [r["step"] for r in reports]
    fig, (ax_d, ax_g) = plt.subplots(1, 2, figsize=(11, 4))
    for key, label in (("d_loss_sketch", "sketch D"), ("d_loss_face", "face D")):
        totals = [
            (r["step"], sum(r[key].values())) for r in reports if r.get(key)
        ]
        if totals:
            xs, ys = zip(*totals)
            ax_d.plot(xs, ys, label=label)
    ax_d.set_title("discriminator loss (summed over scales)")
    ax_d.set_xlabel("step")
    ax_d.legend()
    for key, label in (("g_adv_sketch", "sketch G adv"), ("g_adv_face", "face G adv")):
        points = [(r["step"], r[key]) for r in reports if r.get(key) is not None]
        if points:
            xs, ys = zip(*points)
            ax_g.plot(xs, ys, label=label)
    ax_g.plot(steps, [r["g_total"] for r in reports], label="G total", alpha=0.6)
    ax_g.set_title("generator loss")
    ax_g.set_xlabel("step")
    ax_g.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path


def plot_fid_context(run_fid: float, references: list[dict], out_path: str | Path) -> Path:
    """Bar chart of this run's FID against the full-scale reference scores."""
    out_path = Path(out_path)
    labels = ["this run"]
    values = [run_fid]
    for ref in references:
        if ref.get("fid") is None:
            continue
        labels.append(f"{ref['dataset']}\n{ref['method']}")
        values.append(ref["fid"])
    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(labels), 4))
    colors = ["#d62728"] + ["#7f7f7f"] * (len(labels) - 1)
    ax.bar(range(len(labels)), values, color=colors)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("FID")
    ax.set_title("FID vs full-scale reference scores (NON-COMPARABLE)")
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path


def plot_attr_l2_hist(values: np.ndarray, out_path: str | Path) -> Path:
    """Histogram of per-sample attribute-consistency distances."""
    out_path = Path(out_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(np.asarray(values, dtype=np.float64), bins=20, color="#1f77b4")
    ax.set_xlabel("attribute L2 distance")
    ax.set_ylabel("samples")
    ax.set_title(
        f"attribute consistency (mean {np.mean(values):.3f} +/- {np.std(values):.3f})"
    )
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path


def save_image_grid(images: np.ndarray, out_path: str | Path, columns: int = 8,
                    title: str | None = None) -> Path:
    """Tile uint8 H x W x 3 images into one labeled figure."""
    out_path = Path(out_path)
    images = np.asarray(images)
    n = images.shape[0]
    columns = min(columns, n)
    rows = (n + columns - 1) // columns
    fig, axes = plt.subplots(rows, columns, figsize=(1.4 * columns, 1.4 * rows + 0.4))
    axes = np.atleast_1d(axes).reshape(rows, columns)
    for i in range(rows * columns):
        ax = axes[i // columns, i % columns]
        ax.axis("off")
        if i < n:
            ax.imshow(images[i])
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path
