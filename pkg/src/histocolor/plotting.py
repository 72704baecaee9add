"""Matplotlib figures for histograms, loss traces and evaluation reports.

Figures are rendered off-screen and written atomically; PNG metadata is
stripped so the bytes depend only on the data.
"""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .histogram import HistogramParams  # noqa: E402
from .imageio import atomic_write_bytes  # noqa: E402

GAMMA = 0.25
STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
}


def _save(fig, path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=100, metadata={"Software": None})
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def histogram_rgb(hist) -> np.ndarray:
    """Color composite of the three planes after a 1/4 gamma boost."""
    hist = np.asarray(hist, dtype=np.float64)
    peak = hist.max()
    img = (hist / peak) ** GAMMA if peak > 0 else np.zeros_like(hist)
    # hist[u, v, c] -> rows follow v (flipped so v grows upward), columns follow u
    return np.transpose(img, (1, 0, 2))[::-1]


def plot_histogram(hist, path, params: HistogramParams = HistogramParams(), title=None) -> None:
    hist = np.asarray(hist, dtype=np.float64)
    extent = (params.uv_min, params.uv_max, params.uv_min, params.uv_max)
    comp = histogram_rgb(hist)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 4, figsize=(11, 3), constrained_layout=True)
        for c, name in enumerate("RGB"):
            axes[c].imshow(comp[:, :, c], cmap="magma", extent=extent, vmin=0, vmax=1,
                           interpolation="nearest")
            axes[c].set_title(f"{name} plane")
            axes[c].set_xlabel("u")
        axes[0].set_ylabel("v")
        axes[3].imshow(comp, extent=extent, interpolation="nearest")
        axes[3].set_title("composite")
        axes[3].set_xlabel("u")
        if title:
            fig.suptitle(title)
        _save(fig, path)


def plot_trace(trace, path) -> None:
    """Objective components against iteration; dotted lines mark tau phase changes."""
    it = np.arange(len(trace))
    cols = {k: np.array([getattr(b, k) for b in trace]) for k in
            ("total", "hist_term", "recon_term", "variance_term", "hellinger_raw")}
    taus = np.array([b.tau for b in trace])
    with plt.rc_context(STYLE):
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(10, 3.5), constrained_layout=True)
        for k in ("total", "hist_term", "recon_term", "variance_term"):
            ax0.plot(it, cols[k], label=k, lw=1.2)
        ax0.set_xlabel("iteration")
        ax0.set_ylabel("objective")
        ax0.legend(frameon=False)
        ax1.plot(it, cols["hellinger_raw"], color="k", lw=1.2)
        ax1.set_xlabel("iteration")
        ax1.set_ylabel("Hellinger distance (phase tau)")
        for ax in (ax0, ax1):
            for x in np.nonzero(np.diff(taus))[0] + 1:
                ax.axvline(x, color="0.6", ls=":", lw=0.8)
        _save(fig, path)


def plot_eval(report, path) -> None:
    items = [it for it in report.items if it.ok]
    labels = [f"{i}" for i in range(len(items))]
    x = np.arange(len(items))
    with plt.rc_context(STYLE):
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(10, 3.5), constrained_layout=True)
        for ax, metric, name in ((ax0, "hellinger", "Hellinger distance"), (ax1, "kl", "KL divergence")):
            uv = [getattr(it, f"{metric}_uv") for it in items]
            rgb = [np.nan if getattr(it, f"{metric}_rgb") is None else getattr(it, f"{metric}_rgb") for it in items]
            ax.bar(x - 0.2, uv, width=0.4, label="RGB-uv")
            ax.bar(x + 0.2, rgb, width=0.4, label=f"RGB ({report.rgb_bins}^3)")
            ax.set_xticks(x, labels)
            ax.set_xlabel("pair")
            ax.set_ylabel(name)
            ax.legend(frameon=False)
        _save(fig, path)
