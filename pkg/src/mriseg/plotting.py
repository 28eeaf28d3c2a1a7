"""Report figures: per-case image panels and a metrics summary."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({
    "font.size": 9,
    "axes.titlesize": 9,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
})


def case_figure(result, path):
    """Degraded, filtered and segmented images side by side."""
    panels = [("raw", result.degraded if result.degraded is not None
               else result.trace.images.get("reconstructed")),
              ("filtered", result.filtered),
              ("segmented", result.segmentation.labels)]
    if "presegmented_smooth" in result.trace.images:
        panels.insert(1, ("presegmented + smoothed", result.trace.images["presegmented_smooth"]))
    fig, axes = plt.subplots(1, len(panels), figsize=(2.6 * len(panels), 2.8))
    for ax, (title, img) in zip(axes, panels):
        if title == "segmented":
            ax.imshow(img, cmap="gray", interpolation="nearest")
        else:
            ax.imshow(np.clip(img, 0, 1), cmap="gray", vmin=0, vmax=1, interpolation="nearest")
        ax.set_title(title)
        ax.set_axis_off()
    fig.suptitle(f"{result.case.name}: JS {100 * result.js:.2f}%  DSC {100 * result.dsc:.2f}%  "
                 f"SA {100 * result.sa:.2f}%", fontsize=9)
    fig.savefig(path)
    plt.close(fig)


def metrics_figure(results, path):
    """Grouped bars of JS/DSC/SA per case."""
    names = [r.case.name for r in results]
    vals = np.array([[100 * r.js, 100 * r.dsc, 100 * r.sa] for r in results])
    x = np.arange(len(names))
    width = 0.27
    fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(names) + 1.5), 3.2))
    for i, label in enumerate(("JS", "DSC", "SA")):
        ax.bar(x + (i - 1) * width, vals[:, i], width, label=label)
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=40, ha="right")
    ax.set_ylabel("score (%)")
    lo = max(0.0, float(vals.min()) - 2.0)
    ax.set_ylim(lo, 100.5)
    ax.legend(ncol=3, loc="lower right", frameon=False)
    ax.grid(axis="y", alpha=0.3)
    fig.savefig(path)
    plt.close(fig)
