"""Figures for the detect report, rendered straight to PNG files.

Uses ``matplotlib.figure.Figure`` with the Agg canvas so no display or
global pyplot state is involved.
"""

from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

# no software/version stamp, so reruns give identical files
_PNG_METADATA = {"Software": None}

COLORS = {"subset": "#2a9d8f", "regular": "#8d99ae", "flagged": "#e76f51", "cutoff": "#264653"}


def _new_figure(width=6.0, height=4.5):
    fig = Figure(figsize=(width, height), dpi=100)
    FigureCanvasAgg(fig)
    return fig, fig.add_subplot(1, 1, 1)


def _status(n, subset, flags):
    in_h = np.zeros(n, dtype=bool)
    in_h[np.asarray(subset, dtype=int)] = True
    flags = np.asarray(flags, dtype=bool)
    return in_h, ~in_h & ~flags, flags


def plot_distances(path, distances, flags, cutoff, subset):
    """Robust distance per observation index with the flagging cutoff."""
    d = np.asarray(distances, dtype=float)
    idx = np.arange(d.size)
    in_h, regular, flagged = _status(d.size, subset, flags)
    fig, ax = _new_figure()
    ax.scatter(idx[in_h], d[in_h], s=8, c=COLORS["subset"], label="h-subset")
    ax.scatter(idx[regular], d[regular], s=8, c=COLORS["regular"], label="not in subset")
    ax.scatter(idx[flagged], d[flagged], s=10, c=COLORS["flagged"], label="flagged")
    ax.axhline(cutoff, color=COLORS["cutoff"], lw=1, ls="--", label="cutoff")
    ax.set_xlabel("observation index")
    ax.set_ylabel("robust distance")
    if d.size and d.max() > 0 and d.max() / max(np.median(d), 1e-12) > 50:
        ax.set_yscale("symlog", linthresh=max(cutoff, 1e-3))
    ax.legend(loc="upper right", fontsize=8, frameon=False)
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_METADATA)


def plot_contour(path, X, subset, flags, gx, gy, grid_distances, cutoff):
    """Bivariate data with robust distance contours, the cutoff drawn bold."""
    X = np.asarray(X, dtype=float)
    in_h, regular, flagged = _status(X.shape[0], subset, flags)
    fig, ax = _new_figure(5.5, 5.0)
    D = np.asarray(grid_distances, dtype=float).reshape(len(gy), len(gx))
    finite = D[np.isfinite(D)]
    levels = np.unique(np.quantile(finite, np.linspace(0.05, 0.95, 8))) if finite.size else []
    if len(levels) > 1:
        ax.contour(gx, gy, D, levels=levels, colors="#adb5bd", linewidths=0.6)
    if finite.size and finite.min() < cutoff < finite.max():
        ax.contour(gx, gy, D, levels=[cutoff], colors=COLORS["cutoff"], linewidths=1.4)
    ax.scatter(X[in_h, 0], X[in_h, 1], s=8, c=COLORS["subset"], label="h-subset")
    ax.scatter(X[regular, 0], X[regular, 1], s=8, c=COLORS["regular"], label="not in subset")
    ax.scatter(X[flagged, 0], X[flagged, 1], s=10, c=COLORS["flagged"], label="flagged")
    ax.set_xlim(gx[0], gx[-1])
    ax.set_ylim(gy[0], gy[-1])
    ax.legend(loc="best", fontsize=8, frameon=False)
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_METADATA)
