"""Figures for run reports.

Vector figures go through matplotlib with a fixed hash salt and no date stamp so
repeated renders are byte-identical. The confidence-bound overlay is composed
pixel by pixel so every colored pixel is exactly a mask boundary pixel.
"""

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
from PIL import Image

from .evaluation import MCB_LEVELS, confidence_bounds, mask_boundary
from .io import scale_to_uint8

RC = {
    "svg.hashsalt": "mcmcshape",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": (4.0, 3.2),
    "lines.linewidth": 1.2,
}
SAVE_META = {"svg": {"Date": None}, "png": {"Software": None}}

CLASS_COLORS = ["#1f4e79", "#c55a11", "#548235", "#7030a0", "#bf9000",
                "#2e75b6", "#843c0c", "#375623", "#3a3a3a", "#9e480e"]

LOW_COLOR = (255, 0, 0)
HIGH_COLOR = (0, 200, 0)


def _save(fig, path):
    fmt = str(path).rsplit(".", 1)[-1].lower()
    fig.savefig(path, format=fmt, metadata=SAVE_META.get(fmt))
    plt.close(fig)


def pr_scatter(path, rows, baseline=None):
    """Precision (x) vs recall (y), one dot per sample colored by class.

    ``rows`` are ``(precision, recall, class_id)``; ``baseline`` an optional
    ``(precision, recall)`` drawn as a black cross.
    """
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        by_class = {}
        for p, r, c in rows:
            by_class.setdefault(c, []).append((p, r))
        for c, pts in sorted(by_class.items()):
            pts = np.array(pts)
            ax.scatter(pts[:, 0], pts[:, 1], s=12, color=CLASS_COLORS[c % len(CLASS_COLORS)],
                       label=f"class {c}", linewidths=0)
        if baseline is not None:
            ax.scatter([baseline[0]], [baseline[1]], marker="x", s=40, color="k", label="baseline")
        ax.set_xlabel("precision")
        ax.set_ylabel("recall")
        ax.set_xlim(0, 1.02)
        ax.set_ylim(0, 1.02)
        ax.legend(loc="lower left", frameon=False)
        fig.tight_layout()
        _save(fig, path)


def energy_traces(path, traces, field="e_shape", offset=0):
    """Per-class mean energy against iteration; ``traces`` is {class_id: array}.

    ``offset`` shifts the iteration axis, e.g. by the data-only iterations that
    precede sampling.
    """
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for c, tr in sorted(traces.items()):
            it = offset + np.arange(1, len(tr) + 1)
            ax.plot(it, tr, color=CLASS_COLORS[c % len(CLASS_COLORS)], label=f"class {c}")
        ax.set_xlabel("iteration")
        ax.set_ylabel(f"mean {field}")
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)


def mcb_overlay(h, background=None, levels=MCB_LEVELS):
    """RGB uint8 array: background in gray, boundaries of the low and high
    superlevel sets of ``h`` in red and green (green wins where they meet)."""
    h = np.asarray(h, dtype=float)
    if background is None:
        gray = np.zeros(h.shape, dtype=np.uint8)
    else:
        gray = scale_to_uint8(background)
    rgb = np.repeat(gray[:, :, None], 3, axis=2)
    bounds = confidence_bounds(h, levels)
    lo, hi = min(levels), max(levels)
    rgb[mask_boundary(bounds[lo])] = LOW_COLOR
    rgb[mask_boundary(bounds[hi])] = HIGH_COLOR
    return rgb


def write_mcb_overlay(path, h, background=None, levels=MCB_LEVELS):
    Image.fromarray(mcb_overlay(h, background, levels), mode="RGB").save(path, format="PNG")
