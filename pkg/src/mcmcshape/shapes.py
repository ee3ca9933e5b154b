"""Synthetic binary shape corpora used by the experiments and tests."""

import numpy as np
from scipy import ndimage
from matplotlib.path import Path as MplPath


def _pixel_centers(dims):
    h, w = dims
    rows, cols = np.mgrid[0:h, 0:w]
    return np.column_stack([cols.ravel(), rows.ravel()]).astype(float)


def polygon_mask(dims, vertices):
    """Pixels whose centers fall inside the polygon; vertices are (x, y)."""
    inside = MplPath(np.asarray(vertices, float)).contains_points(_pixel_centers(dims))
    return inside.reshape(dims)


def ellipse_mask(dims, cx, cy, ax, ay):
    h, w = dims
    rows, cols = np.mgrid[0:h, 0:w]
    return ((cols - cx) / ax) ** 2 + ((rows - cy) / ay) ** 2 <= 1.0


def rect_mask(dims, x0, y0, x1, y1):
    """Half-open pixel rectangle [x0, x1) x [y0, y1)."""
    m = np.zeros(dims, dtype=bool)
    m[max(y0, 0):max(y1, 0), max(x0, 0):max(x1, 0)] = True
    return m


# -- aircraft-like silhouettes --------------------------------------------------

def aircraft(dims=(64, 64), span=22.0, sweep=6.0, root_chord=10.0, tip_chord=4.0,
             wing_y=28.0, tail_span=8.0, body_len=25.0, body_w=3.5):
    """Top view of a plane pointing up: fuselage, swept wings and tailplane."""
    h, w = dims
    cx = (w - 1) / 2.0
    cy = (h - 1) / 2.0 + 1.0
    m = ellipse_mask(dims, cx, cy, body_w, body_len)

    def wing_pair(y_root, half_span, sweep_, c_root, c_tip):
        out = np.zeros(dims, dtype=bool)
        for side in (-1.0, 1.0):
            verts = [
                (cx, y_root),
                (cx + side * half_span, y_root + sweep_),
                (cx + side * half_span, y_root + sweep_ + c_tip),
                (cx, y_root + c_root),
            ]
            out |= polygon_mask(dims, verts)
        return out

    m |= wing_pair(wing_y, span, sweep, root_chord, tip_chord)
    tail_y = cy + body_len - 9.0
    m |= wing_pair(tail_y, tail_span, 3.0, 5.0, 2.5)
    return m


AIRCRAFT_PARAMS = [
    dict(span=22, sweep=6, root_chord=10, tip_chord=4, wing_y=26, tail_span=8),
    dict(span=25, sweep=9, root_chord=11, tip_chord=3, wing_y=25, tail_span=9),
    dict(span=19, sweep=3, root_chord=9, tip_chord=5, wing_y=27, tail_span=7),
    dict(span=27, sweep=12, root_chord=12, tip_chord=3, wing_y=23, tail_span=10),
    dict(span=21, sweep=0, root_chord=8, tip_chord=6, wing_y=28, tail_span=8),
    dict(span=24, sweep=7, root_chord=13, tip_chord=4, wing_y=24, tail_span=7),
    dict(span=18, sweep=5, root_chord=11, tip_chord=4, wing_y=27, tail_span=9),
    dict(span=26, sweep=4, root_chord=9, tip_chord=5, wing_y=26, tail_span=8),
    dict(span=23, sweep=10, root_chord=10, tip_chord=3, wing_y=25, tail_span=10),
    dict(span=20, sweep=8, root_chord=12, tip_chord=5, wing_y=26, tail_span=7),
    dict(span=28, sweep=6, root_chord=10, tip_chord=4, wing_y=24, tail_span=9),
]


def aircraft_corpus(dims=(64, 64)):
    """Eleven one-class aircraft silhouettes."""
    return [aircraft(dims, **p) for p in AIRCRAFT_PARAMS]


def left_wing_rect(mask, margin=1, body_clear=5):
    """Occluder ``(x, y, w, h)`` covering the left main wing outboard of the fuselage."""
    h, w = mask.shape
    x_end = int(round((w - 1) / 2.0)) - body_clear
    labels, n = ndimage.label(mask[:, :x_end])
    if n == 0:
        raise ValueError("no structure left of the fuselage")
    sizes = ndimage.sum(np.ones_like(labels), labels, index=range(1, n + 1))
    wing = labels == (int(np.argmax(sizes)) + 1)
    rows = np.nonzero(wing.any(axis=1))[0]
    cols = np.nonzero(wing.any(axis=0))[0]
    y0 = max(int(rows.min()) - margin, 0)
    y1 = min(int(rows.max()) + margin + 1, h)
    x0 = max(int(cols.min()) - margin, 0)
    return (x0, y0, x_end - x0, y1 - y0)


# -- three glyph classes sharing a vertical stem --------------------------------

GLYPH_CLASSES = ("tee", "gamma", "eye")


def glyph(kind, dims=(64, 64), stem_w=8, stem_h=40, bar_len=36, bar_h=8, top=12, dx=0):
    """``tee``: stem under a centered bar; ``gamma``: bar to the right only;
    ``eye``: bare stem with a short foot."""
    h, w = dims
    cx = w // 2 + dx
    x0 = cx - stem_w // 2
    m = rect_mask(dims, x0, top, x0 + stem_w, top + stem_h)
    if kind == "tee":
        m |= rect_mask(dims, cx - bar_len // 2, top, cx + bar_len - bar_len // 2, top + bar_h)
    elif kind == "gamma":
        m |= rect_mask(dims, x0, top, x0 + bar_len // 2 + stem_w // 2, top + bar_h)
    elif kind == "eye":
        m |= rect_mask(dims, x0 - 4, top + stem_h - bar_h // 2, x0 + stem_w + 4, top + stem_h)
    else:
        raise ValueError(f"unknown glyph class {kind!r}")
    return m


def glyph_params(n, seed):
    rng = np.random.default_rng(seed)
    return [dict(stem_w=int(rng.integers(6, 10)), stem_h=int(rng.integers(36, 44)),
                 bar_len=int(rng.integers(30, 40)), bar_h=int(rng.integers(6, 10)),
                 top=int(rng.integers(10, 14)), dx=int(rng.integers(-2, 3)))
            for _ in range(n)]


def glyph_corpus(per_class=10, dims=(64, 64), seed=7):
    """[(mask, class_id)] with ``per_class`` instances of each glyph class."""
    out = []
    for c, kind in enumerate(GLYPH_CLASSES):
        for p in glyph_params(per_class, [seed, c]):
            out.append((glyph(kind, dims, **p), c))
    return out


def mirror_pair(mask):
    """A shape and its left-right mirror image."""
    m = np.asarray(mask, dtype=bool)
    return m, m[:, ::-1].copy()


# -- composite shapes: a block on top, an ellipse below, joined by a neck -------

def two_part(dims=(64, 64), top_w=24, top_h=16, bot_rx=14, bot_ry=10, neck_w=6):
    h, w = dims
    cx = (w - 1) / 2.0
    mid = h // 2
    x0 = int(round(cx - top_w / 2.0)) + 1
    m = rect_mask(dims, x0, mid - 2 - top_h, x0 + top_w, mid - 2)
    m |= ellipse_mask(dims, cx, mid + 2 + bot_ry, bot_rx, bot_ry)
    n0 = int(round(cx - neck_w / 2.0)) + 1
    m |= rect_mask(dims, n0, mid - 3, n0 + neck_w, mid + 3)
    return m


def part_variants(n, seed=11):
    """``n`` top-part and ``n`` bottom-part parameter sets, both sorted by size."""
    rng = np.random.default_rng(seed)
    tops = sorted(zip(rng.integers(14, 40, n), rng.integers(8, 20, n)))
    bots = sorted(zip(rng.integers(6, 22, n), rng.integers(5, 16, n)))
    tops = [dict(top_w=int(a), top_h=int(b)) for a, b in tops]
    bots = [dict(bot_rx=int(a), bot_ry=int(b)) for a, b in bots]
    return tops, bots


def composite_corpus(n_train=16, n_test=14, dims=(64, 64), seed=11):
    """Training shapes pair the k-th smallest top with the k-th smallest bottom.

    Test shapes pair each top with the bottom half a cycle away in size order,
    so no training shape matches a test shape as a whole while every part has
    close relatives among the training parts.
    """
    n = n_train + n_test
    tops, bots = part_variants(n, seed)
    test_k = [int(round(k)) for k in np.linspace(0, n - 1, n_test)]
    train_k = [k for k in range(n) if k not in test_k]
    train = [two_part(dims, **tops[k], **bots[k]) for k in train_k]
    test = [two_part(dims, **tops[k], **bots[(k + n // 2) % n]) for k in test_k]
    return train, test
