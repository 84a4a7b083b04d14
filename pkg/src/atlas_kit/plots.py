"""Figure rendering for the CLI report path.

Each plot function takes the same data that goes into the delimited plot-data
CSVs and renders a PNG next to it. Rendering is headless (Agg) and avoids
wall-clock metadata so repeated runs produce stable files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .capacity import FrontierPoint
from .run_data import LearningCurve
from .transfer import TransferMatrix

_DPI = 120


def _save(fig, path: Path) -> None:
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_fit_trajectories(
    path: Path,
    rows: Sequence[tuple[float, float, float, float]],
) -> None:
    """Observed vs predicted loss against tokens, one line per model size.

    rows: (n_params, tokens, observed_loss, predicted_loss)
    """
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    sizes = sorted({r[0] for r in rows})
    cmap = plt.get_cmap("viridis")
    for i, n in enumerate(sizes):
        sub = sorted((r[1], r[2], r[3]) for r in rows if r[0] == n)
        tokens = [s[0] for s in sub]
        color = cmap(i / max(len(sizes) - 1, 1))
        ax.plot(tokens, [s[1] for s in sub], "o", ms=3.5, color=color, alpha=0.7)
        ax.plot(tokens, [s[2] for s in sub], "-", color=color, label=f"N={n:.2g}")
    ax.set_xscale("log")
    ax.set_xlabel("training tokens")
    ax.set_ylabel("loss")
    ax.set_title("observed (points) vs fitted (lines)")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    _save(fig, path)


def plot_transfer_heatmap(path: Path, matrix: TransferMatrix) -> None:
    """Source-by-target score grid; estimated cells are hatched."""
    n = len(matrix.languages)
    fig, ax = plt.subplots(figsize=(0.5 * n + 2.5, 0.5 * n + 2))
    data = np.ma.masked_invalid(matrix.scores)
    vmax = float(np.nanmax(np.abs(matrix.scores))) if n else 1.0
    im = ax.imshow(data, cmap="RdBu_r", vmin=-vmax, vmax=vmax)
    for i in range(n):
        for j in range(n):
            if matrix.provenance[i][j] == "estimated":
                ax.add_patch(
                    plt.Rectangle((j - 0.5, i - 0.5), 1, 1, fill=False,
                                  hatch="///", edgecolor="gray", linewidth=0)
                )
    ax.set_xticks(range(n), matrix.languages, rotation=90, fontsize=7)
    ax.set_yticks(range(n), matrix.languages, fontsize=7)
    ax.set_xlabel("target")
    ax.set_ylabel("source")
    fig.colorbar(im, ax=ax, shrink=0.8, label="transfer score")
    ax.set_title("cross-lingual transfer (hatched = estimated)")
    fig.tight_layout()
    _save(fig, path)


def plot_frontier(path: Path, points: Sequence[FrontierPoint], r: float) -> None:
    """Iso-loss frontier in the (model-size, total-token) multiplier plane plus
    the compute ratio along it."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.2, 4.0))
    s = [p.s for p in points]
    ax1.plot(s, [p.d_tot_ratio for p in points], "-", color="tab:blue")
    ax1.set_xscale("log")
    ax1.set_yscale("log")
    ax1.set_xlabel("model-size multiplier s")
    ax1.set_ylabel("total-token multiplier")
    ax1.set_title(f"iso-loss frontier (r={r:g})")
    ax2.plot(s, [p.c_ratio for p in points], "-", color="tab:red")
    ax2.set_xscale("log")
    ax2.set_xlabel("model-size multiplier s")
    ax2.set_ylabel("compute multiplier")
    ax2.set_title("compute along the frontier")
    fig.tight_layout()
    _save(fig, path)


def plot_crossover_curves(
    path: Path,
    curves: Mapping[str, tuple[LearningCurve, LearningCurve]],
    crossovers: Mapping[str, float | None],
) -> None:
    """Pretrain and finetune loss curves per language with the detected
    crossover marked."""
    n = len(curves)
    cols = min(n, 3)
    fig_rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(fig_rows, cols, figsize=(4.0 * cols, 3.0 * fig_rows),
                             squeeze=False)
    for ax in axes.flat[n:]:
        ax.axis("off")
    for ax, (lang, (pre, fine)) in zip(axes.flat, sorted(curves.items())):
        ax.plot(pre.tokens, pre.losses, ":", color="tab:blue", label="pretrain")
        ax.plot(fine.tokens, fine.losses, "--", color="tab:orange", label="finetune")
        crossing = crossovers.get(lang)
        if crossing is not None:
            ax.axvline(crossing, color="gray", lw=0.8)
        ax.set_xscale("log")
        ax.set_title(lang, fontsize=9)
        ax.set_xlabel("tokens")
        ax.set_ylabel("loss")
        ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)
