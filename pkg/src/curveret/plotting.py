"""Report figures: precision-recall curves and tiling overlays."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import spectral  # noqa: E402
from .curvelet import TilingConfig, label_plane  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
}
# PNG metadata without the matplotlib version keeps reruns byte-identical.
PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", metadata=PNG_META)
    plt.close(fig)
    return path


def plot_pr_curve(points, path, title: str = "", label: str | None = None) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.5, 3.0))
        if points:
            rec, prec = zip(*points)
            ax.plot(rec, prec, marker="o", ms=3, lw=1.2, label=label)
        ax.set_xlim(0, 1.02)
        ax.set_ylim(0, 1.05)
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        if title:
            ax.set_title(title)
        if label:
            ax.legend(loc="lower left", frameon=False)
        ax.grid(alpha=0.3, lw=0.5)
        return _save(fig, path)


def plot_tiling(img, config: TilingConfig, path, title: str = "") -> Path:
    """Log-magnitude spectrum with wedge borders of the processed half-plane."""
    logmag = spectral.log_magnitude(spectral.fft2(img))
    labels = label_plane(config)
    edges = np.zeros(labels.shape, dtype=bool)
    edges[1:, :] |= labels[1:, :] != labels[:-1, :]
    edges[:, 1:] |= labels[:, 1:] != labels[:, :-1]
    edges &= labels >= 0
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 4.0))
        ax.imshow(logmag, cmap="viridis", interpolation="nearest")
        overlay = np.ma.masked_where(~edges, edges.astype(float))
        ax.imshow(overlay, cmap="autumn", interpolation="nearest", alpha=0.9)
        ax.set_xticks([])
        ax.set_yticks([])
        if title:
            ax.set_title(title)
        return _save(fig, path)
