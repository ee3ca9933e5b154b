"""Reading and writing masks and scalar fields (PNG, PGM, CSV)."""

import csv
from pathlib import Path

import numpy as np
from PIL import Image

INSIDE_THRESHOLD = 128


def read_gray(path):
    with Image.open(path) as im:
        if im.mode not in ("L", "I", "I;16", "1"):
            im = im.convert("L")
        return np.asarray(im)


def read_mask(path, threshold=INSIDE_THRESHOLD):
    """Binary mask from a PNG/PGM; pixel value >= threshold is inside."""
    arr = read_gray(path)
    if arr.dtype == bool:
        return arr.copy()
    return arr >= threshold


def write_mask(path, mask):
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def scale_to_uint8(values):
    v = np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    if hi > lo:
        v = (v - lo) / (hi - lo) * 255.0
    else:
        v = np.zeros_like(v)
    return np.clip(np.rint(v), 0, 255).astype(np.uint8)


def write_field_pgm(path, values):
    """Min-max scaled 8-bit PGM for inspection; not an exact round-trip."""
    Image.fromarray(scale_to_uint8(values), mode="L").save(path, format="PPM")


def write_field_csv(path, values):
    v = np.asarray(values, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in v:
            w.writerow([repr(float(x)) for x in row])


def read_field_csv(path):
    with open(path, newline="") as fh:
        rows = [[float(x) for x in row] for row in csv.reader(fh) if row]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: not a rectangular grid")
    return np.array(rows, dtype=float)


def read_image(path):
    """Scalar image from CSV (exact) or any grayscale raster."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_field_csv(path)
    return read_gray(path).astype(float)
