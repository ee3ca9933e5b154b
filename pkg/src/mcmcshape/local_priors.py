"""Patch-wise (local) shape priors.

The aligned frame is tiled into a grid of rectangles. Each patch draws its own
training sources, so different object parts can follow different training
shapes. A one-patch layout reproduces the whole-shape prior exactly.
"""

import math
from dataclasses import dataclass

import numpy as np

from .energy import chan_vese_descent, log_prior_from_distances, shape_pull
from .grid import l2_distances, log_gaussian_kernel
from .selection import select_subset, selection_log_prob


@dataclass(frozen=True)
class PatchLayout:
    dims: tuple
    rows: int
    cols: int
    row_edges: tuple
    col_edges: tuple

    @property
    def rects(self):
        """(row0, row1, col0, col1) half-open rectangles, row-major."""
        return [(self.row_edges[i], self.row_edges[i + 1], self.col_edges[j], self.col_edges[j + 1])
                for i in range(self.rows) for j in range(self.cols)]

    def slices(self):
        return [(slice(r0, r1), slice(c0, c1)) for r0, r1, c0, c1 in self.rects]

    def __len__(self):
        return self.rows * self.cols


def _edges(n, k):
    size = n // k
    edges = [i * size for i in range(k)] + [n]
    return tuple(edges)


def make_patch_layout(dims, rows, cols):
    """Near-equal tiling; the last row/column absorbs the remainder."""
    h, w = dims
    if rows < 1 or cols < 1 or rows > h or cols > w:
        raise ValueError(f"cannot tile {h}x{w} into {rows}x{cols} patches")
    return PatchLayout((h, w), rows, cols, _edges(h, rows), _edges(w, cols))


def parse_patch_grid(text):
    """'2x4' -> (2, 4)."""
    try:
        r, c = text.lower().split("x")
        return int(r), int(c)
    except ValueError:
        raise ValueError(f"patch grid must look like RxC, got {text!r}") from None


def patch_sigmas(layout, sigma):
    h, w = layout.dims
    return [sigma * math.sqrt(((r1 - r0) * (c1 - c0)) / (h * w)) for r0, r1, c0, c1 in layout.rects]


def _axis_weights(n, edges, width):
    """Partition of unity along one axis with linear cross-fades at internal edges."""
    k = len(edges) - 1
    x = np.arange(n, dtype=float)
    rising = [np.ones(n)]
    for e in edges[1:-1]:
        border = e - 0.5
        if width > 0:
            rising.append(np.clip(0.5 + (x - border) / width, 0.0, 1.0))
        else:
            rising.append((x > border).astype(float))
    rising.append(np.zeros(n))
    w = np.array([rising[i] - rising[i + 1] for i in range(k)])
    w = np.clip(w, 0.0, None)
    return w / w.sum(axis=0)


def blend_weights(layout, width=3):
    """One weight map per patch; maps sum to one at every pixel."""
    h, w = layout.dims
    wr = _axis_weights(h, layout.row_edges, width)
    wc = _axis_weights(w, layout.col_edges, width)
    return [np.outer(wr[i], wc[j]) for i in range(layout.rows) for j in range(layout.cols)]


def patch_distances(sdf, stack, layout):
    """Per-patch L2 distances from ``sdf`` to every field in ``stack``."""
    return [l2_distances(sdf[sl], stack[(slice(None),) + sl]) for sl in layout.slices()]


def log_patch_similarities(sdf, ts, class_id, layout):
    stack = ts.class_stack(class_id)
    sig = patch_sigmas(layout, ts.sigma)
    return [log_gaussian_kernel(d, s) for d, s in zip(patch_distances(sdf, stack, layout), sig)]


def patch_similarities(sdf, ts, class_id, layout):
    return [np.exp(ls) for ls in log_patch_similarities(sdf, ts, class_id, layout)]


@dataclass(frozen=True)
class PatchSelection:
    class_id: int
    records: tuple
    log_prob: float
    fallback: bool = False


def select_patch_sources(rng, patch_log_sims, gamma, class_id=0):
    """Independent similarity-weighted draws for every patch."""
    recs = tuple(select_subset(rng, ls, gamma, class_id) for ls in patch_log_sims)
    return PatchSelection(class_id, recs, float(sum(r.log_prob for r in recs)),
                          any(r.fallback for r in recs))


def patch_shape_field(sdf, patch_sel, ts, layout, weights):
    stack = ts.class_stack(patch_sel.class_id)
    sig = patch_sigmas(layout, ts.sigma)
    out = np.zeros(ts.dims)
    for rec, sl, s, wmap in zip(patch_sel.records, layout.slices(), sig, weights):
        selected = stack[np.asarray(rec.shape_indices)]
        d = l2_distances(sdf[sl], selected[(slice(None),) + sl])
        out += wmap * shape_pull(sdf, selected, d, s)
    return out


def composite_perturbation(sdf, patch_sel, image, ts, params, beta, layout, blend_width=3):
    """Global data descent plus per-patch shape pulls blended across patch borders."""
    sdf = np.asarray(sdf, dtype=float)
    if np.shape(image) != sdf.shape or tuple(layout.dims) != sdf.shape:
        raise ValueError("image, level set and layout dims must agree")
    field = chan_vese_descent(image, sdf, params)
    if beta:
        weights = blend_weights(layout, blend_width)
        field = field + beta * patch_shape_field(sdf, patch_sel, ts, layout, weights)
    return field


def local_shape_energy(sdf, ts, layout):
    """Sum over patches of -log of the patch-restricted Parzen prior (unblended)."""
    sig = patch_sigmas(layout, ts.sigma)
    per_class = [patch_distances(sdf, stack, layout) for stack in ts.stacks]
    total = 0.0
    for p, s in enumerate(sig):
        total -= log_prior_from_distances([d[p] for d in per_class], s)
    return total


class LocalPrior:
    """Proposal machinery for patch-wise priors (same interface as ``GlobalPrior``)."""

    def __init__(self, ts, layout, blend_width=3):
        if tuple(layout.dims) != tuple(ts.dims):
            raise ValueError("layout dims differ from the training set")
        self.ts = ts
        self.layout = layout
        self.weights = blend_weights(layout, blend_width)

    def log_similarities(self, sdf, class_id):
        return log_patch_similarities(sdf, self.ts, class_id, self.layout)

    def draw(self, rng, log_sims, gamma, class_id):
        return select_patch_sources(rng, log_sims, gamma, class_id)

    def log_prob(self, selection, log_sims):
        return float(sum(selection_log_prob(r.shape_indices, ls)
                         for r, ls in zip(selection.records, log_sims)))

    def shape_field(self, sdf, selection):
        return patch_shape_field(sdf, selection, self.ts, self.layout, self.weights)

    def shape_energy(self, sdf):
        return local_shape_energy(sdf, self.ts, self.layout)

    @staticmethod
    def digest_items(selection):
        if len(selection.records) == 1:
            return selection.records[0].shape_indices
        return tuple(r.shape_indices for r in selection.records)

    @staticmethod
    def n_fallbacks(selection):
        return sum(int(r.fallback) for r in selection.records)

