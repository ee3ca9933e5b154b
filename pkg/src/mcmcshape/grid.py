"""Pixel-grid primitives: masks, signed distance fields, L2 shape distance and
the 1D Gaussian kernel.

Fields are plain 2D numpy arrays. Masks are ``bool`` arrays (True = inside the
curve); signed distance fields are ``float64`` arrays, negative inside and
positive outside, in pixel units.
"""

import math

import numpy as np
from scipy import ndimage

SQRT_2PI = math.sqrt(2.0 * math.pi)


class DegenerateMaskError(ValueError):
    """Raised when a mask (or level set) has no inside or no outside pixel."""


class GridMismatchError(ValueError):
    pass


def check_same_dims(*arrays):
    shape = np.shape(arrays[0])
    for a in arrays[1:]:
        if np.shape(a) != shape:
            raise GridMismatchError(f"grid dims differ: {shape} vs {np.shape(a)}")


def as_mask(mask):
    m = np.asarray(mask)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2D grid, got shape {m.shape}")
    return m.astype(bool, copy=False)


def is_degenerate(mask):
    m = np.asarray(mask, dtype=bool)
    return bool(m.all() or not m.any())


def mask_to_sdf(mask):
    """Exact Euclidean signed distance field of a binary mask.

    Inside pixels get minus the distance to the nearest outside pixel center,
    outside pixels get the distance to the nearest inside pixel center.
    """
    m = as_mask(mask)
    if is_degenerate(m):
        raise DegenerateMaskError("mask must contain both inside and outside pixels")
    # edt measures distance from each nonzero pixel to the nearest zero pixel
    outside = ndimage.distance_transform_edt(~m)
    inside = ndimage.distance_transform_edt(m)
    return outside - inside


def sdf_to_mask(sdf):
    """Inside where phi < 0; phi == 0 counts as outside."""
    return np.asarray(sdf) < 0


def reinitialize(sdf):
    """Restore the distance property of a level set without moving its mask."""
    phi = np.asarray(sdf, dtype=float)
    if not np.all(np.isfinite(phi)):
        raise ValueError("level set contains non-finite values")
    mask = sdf_to_mask(phi)
    if is_degenerate(mask):
        raise DegenerateMaskError("level set has a single sign; nothing to reinitialize")
    return mask_to_sdf(mask)


def l2_distance(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    check_same_dims(a, b)
    return float(np.sqrt(np.sum((a - b) ** 2)))


def l2_distances(phi, stack):
    """Distances from ``phi`` to every field in ``stack`` (shape ``(k, H, W)``)."""
    phi = np.asarray(phi, dtype=float)
    stack = np.asarray(stack, dtype=float)
    if stack.shape[1:] != phi.shape:
        raise GridMismatchError(f"grid dims differ: {phi.shape} vs {stack.shape[1:]}")
    diff = stack - phi
    return np.sqrt(np.einsum("kij,kij->k", diff, diff))


def _check_sigma(sigma):
    if not sigma > 0:
        raise ValueError(f"kernel size must be positive, got {sigma}")


def gaussian_kernel(d, sigma):
    """1D Gaussian density with standard deviation ``sigma`` evaluated at ``d``."""
    _check_sigma(sigma)
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("distance must be non-negative")
    out = np.exp(-(d * d) / (2.0 * sigma * sigma)) / (sigma * SQRT_2PI)
    return float(out) if out.ndim == 0 else out


def log_gaussian_kernel(d, sigma):
    """``log gaussian_kernel(d, sigma)``; finite where the direct form underflows."""
    _check_sigma(sigma)
    d = np.asarray(d, dtype=float)
    return -(d * d) / (2.0 * sigma * sigma) - math.log(sigma * SQRT_2PI)


def logsumexp(x):
    """log(sum(exp(x))) for a 1D array; scipy's version is slow on tiny inputs."""
    x = np.asarray(x, dtype=float)
    m = x.max()
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.exp(x - m).sum()))
