"""Similarity-transform alignment of binary shapes and the aligned training set.

A :class:`Pose` maps a point ``p`` (x = column, y = row) to
``c + s * R(theta) @ (p - c) + t`` where ``c`` is the grid center. Applying a
pose to a field moves its content forward through that map.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .grid import (
    DegenerateMaskError,
    as_mask,
    is_degenerate,
    l2_distances,
    mask_to_sdf,
    reinitialize,
    sdf_to_mask,
)

MIN_LOG_SCALE = math.log(0.25)
MAX_LOG_SCALE = math.log(4.0)


def wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    t = math.remainder(theta, 2.0 * math.pi)
    return math.pi if t == -math.pi else t


@dataclass(frozen=True)
class Pose:
    tx: float = 0.0
    ty: float = 0.0
    theta: float = 0.0
    log_scale: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))
        ls = min(max(self.log_scale, MIN_LOG_SCALE), MAX_LOG_SCALE)
        object.__setattr__(self, "log_scale", ls)

    @property
    def scale(self):
        return math.exp(self.log_scale)

    def inverse(self):
        s = self.scale
        c, sn = math.cos(self.theta), math.sin(self.theta)
        # t' = -(1/s) R(-theta) t
        tx = -(c * self.tx + sn * self.ty) / s
        ty = -(-sn * self.tx + c * self.ty) / s
        return Pose(tx, ty, -self.theta, -self.log_scale)

    def is_identity(self):
        return self.tx == 0 and self.ty == 0 and self.theta == 0 and self.log_scale == 0

    def as_dict(self):
        return {"tx": self.tx, "ty": self.ty, "theta": self.theta, "log_scale": self.log_scale}


IDENTITY = Pose()


def _grid_center(shape):
    return (shape[0] - 1) / 2.0, (shape[1] - 1) / 2.0


def _inverse_affine(shape, pose):
    """Matrix/offset for ndimage.affine_transform in (row, col) coordinates."""
    cy, cx = _grid_center(shape)
    s = pose.scale
    c, sn = math.cos(pose.theta), math.sin(pose.theta)
    # R(-theta) written for (row, col) vectors, divided by the scale
    matrix = np.array([[c, -sn], [sn, c]]) / s
    shifted = np.array([cy + pose.ty, cx + pose.tx])
    offset = np.array([cy, cx]) - matrix @ shifted
    return matrix, offset


def warp_mask(mask, pose):
    m = as_mask(mask)
    if pose.is_identity():
        return m.copy()
    matrix, offset = _inverse_affine(m.shape, pose)
    out = ndimage.affine_transform(m.astype(np.uint8), matrix, offset, order=0,
                                   mode="constant", cval=0)
    return out.astype(bool)


def warp_scalar(values, pose, order=1):
    """Bilinear warp of a scalar field; out-of-frame samples take the nearest edge value."""
    v = np.asarray(values, dtype=float)
    if pose.is_identity():
        return v.copy()
    matrix, offset = _inverse_affine(v.shape, pose)
    return ndimage.affine_transform(v, matrix, offset, order=order, mode="nearest")


def warp_sdf(sdf, pose):
    # distances scale with the shape
    return warp_scalar(sdf, pose) * pose.scale


def apply_pose(field_, pose):
    """Apply ``pose`` to a mask (nearest neighbour) or a level set (bilinear)."""
    arr = np.asarray(field_)
    if arr.dtype == bool:
        return warp_mask(arr, pose)
    return warp_sdf(arr, pose)


def symmetric_difference(a, b):
    return int(np.count_nonzero(np.asarray(a, bool) ^ np.asarray(b, bool)))


def _soft_objective(moving_f, fixed_f, pose):
    return float(np.abs(warp_scalar(moving_f, pose) - fixed_f).sum())


def _centroid_xy(mask):
    rows, cols = np.nonzero(mask)
    return cols.mean(), rows.mean()


def _centroid_matching_pose(moving, fixed, theta, log_scale):
    mx, my = _centroid_xy(moving)
    fx, fy = _centroid_xy(fixed)
    cy, cx = _grid_center(moving.shape)
    s = math.exp(log_scale)
    c, sn = math.cos(theta), math.sin(theta)
    dx, dy = mx - cx, my - cy
    tx = fx - cx - s * (c * dx - sn * dy)
    ty = fy - cy - s * (sn * dx + c * dy)
    return Pose(tx, ty, theta, log_scale)


def estimate_pose(moving, fixed, rotation_range_deg=180.0, refine=True):
    """Pose ``p`` such that ``apply_pose(moving, p)`` best overlaps ``fixed``.

    Coarse stage: centroid match, area-ratio scale and a 1 degree rotation sweep
    within +/- ``rotation_range_deg``. Fine stage: pattern search on a bilinear
    (soft) symmetric-difference objective. The identity is returned whenever the
    result does not reduce the hard symmetric difference.
    """
    moving = as_mask(moving)
    fixed = as_mask(fixed)
    if moving.shape != fixed.shape:
        raise ValueError(f"mask dims differ: {moving.shape} vs {fixed.shape}")
    if is_degenerate(moving) or is_degenerate(fixed):
        raise DegenerateMaskError("cannot align a degenerate mask")

    log_s0 = 0.5 * math.log(fixed.sum() / moving.sum())
    log_s0 = min(max(log_s0, MIN_LOG_SCALE), MAX_LOG_SCALE)
    n_steps = int(math.floor(rotation_range_deg))
    best, best_cost = None, None
    for deg in range(-n_steps, n_steps + 1):
        if deg == -180:
            continue
        pose = _centroid_matching_pose(moving, fixed, math.radians(deg), log_s0)
        cost = symmetric_difference(warp_mask(moving, pose), fixed)
        if best_cost is None or cost < best_cost:
            best, best_cost = pose, cost

    if refine:
        best = _pattern_search(moving.astype(float), fixed.astype(float), best,
                               math.radians(rotation_range_deg))

    identity_cost = symmetric_difference(moving, fixed)
    if symmetric_difference(warp_mask(moving, best), fixed) >= identity_cost:
        return IDENTITY
    return best


def _pattern_search(moving_f, fixed_f, start, max_theta):
    params = np.array([start.tx, start.ty, start.theta, start.log_scale])
    steps = np.array([1.0, 1.0, math.radians(1.0), 0.02])
    min_steps = steps / 8.0

    def cost(p):
        if abs(p[2]) > max_theta + 1e-12:
            return math.inf
        return _soft_objective(moving_f, fixed_f, Pose(*p))

    current = cost(params)
    while np.any(steps >= min_steps):
        improved = False
        for k in range(4):
            if steps[k] < min_steps[k]:
                continue
            for sign in (1.0, -1.0):
                trial = params.copy()
                trial[k] += sign * steps[k]
                trial[3] = min(max(trial[3], MIN_LOG_SCALE), MAX_LOG_SCALE)
                c = cost(trial)
                if c < current - 1e-9:
                    params, current, improved = trial, c, True
                    break
        if not improved:
            steps = steps / 2.0
    return Pose(*params)


@dataclass(frozen=True)
class AlignedShape:
    id: str
    class_id: int
    mask: np.ndarray
    sdf: np.ndarray
    pose_from_raw: Pose


@dataclass(frozen=True)
class TrainingSet:
    """Aligned training shapes grouped by class, with the shared kernel size.

    Class ids are 0-based indices into ``class_names``.
    """

    shapes: tuple
    class_names: tuple
    sigma: float
    reference_id: str
    stacks: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.shapes:
            raise ValueError("training set is empty")
        if not self.sigma > 0:
            raise ValueError("kernel size must be positive")
        dims = self.shapes[0].sdf.shape
        stacks = []
        for i in range(len(self.class_names)):
            members = [s.sdf for s in self.shapes if s.class_id == i]
            if not members:
                raise ValueError(f"class {self.class_names[i]!r} has no shapes")
            if any(m.shape != dims for m in members):
                raise ValueError("training shapes must share grid dims")
            st = np.stack(members).astype(float)
            st.setflags(write=False)
            stacks.append(st)
        object.__setattr__(self, "stacks", tuple(stacks))

    @property
    def dims(self):
        return self.shapes[0].sdf.shape

    @property
    def n_classes(self):
        return len(self.class_names)

    def class_sizes(self):
        return [len(s) for s in self.stacks]

    def class_stack(self, class_id):
        if not 0 <= class_id < self.n_classes:
            raise ValueError(f"invalid class id {class_id}")
        return self.stacks[class_id]

    def class_shapes(self, class_id):
        return [s for s in self.shapes if s.class_id == class_id]

    @property
    def reference(self):
        for s in self.shapes:
            if s.id == self.reference_id:
                return s
        raise KeyError(self.reference_id)

    def with_sigma(self, sigma):
        return TrainingSet(self.shapes, self.class_names, float(sigma), self.reference_id)


def nearest_neighbour_sigma(sdfs):
    """Mean over shapes of the L2 distance to the nearest other shape."""
    stack = np.stack([np.asarray(s, float) for s in sdfs])
    k = len(stack)
    # one shape (or only duplicates): fall back to a 1 px RMS deviation over the grid
    fallback = math.sqrt(stack[0].size)
    if k < 2:
        return fallback
    nn = []
    for i in range(k):
        d = l2_distances(stack[i], stack)
        d[i] = np.inf
        nn.append(d.min())
    sigma = float(np.mean(nn))
    return sigma if sigma > 0 else fallback


def align_training_set(raw, class_names=None, ids=None, reference_index=0, sigma=None,
                       rotation_range_deg=180.0, align=True):
    """Align ``raw`` = [(mask, class_id), ...] to the reference shape.

    ``sigma=None`` selects the nearest-neighbour rule of
    :func:`nearest_neighbour_sigma`; any positive number overrides it.
    """
    raw = list(raw)
    if not raw:
        raise ValueError("no training shapes given")
    dims = np.shape(raw[0][0])
    for mask, _ in raw:
        if np.shape(mask) != dims:
            raise ValueError(f"training shape dims {np.shape(mask)} differ from {dims}")
    if class_names is None:
        n = max(int(c) for _, c in raw) + 1
        class_names = tuple(str(i) for i in range(n))
    if ids is None:
        ids = [f"shape{i:03d}" for i in range(len(raw))]

    ref_mask = as_mask(raw[reference_index][0])
    shapes = []
    for i, (mask, cid) in enumerate(raw):
        mask = as_mask(mask)
        if i == reference_index or not align:
            pose = IDENTITY
        else:
            pose = estimate_pose(mask, ref_mask, rotation_range_deg)
        aligned = warp_mask(mask, pose)
        if is_degenerate(aligned):
            raise DegenerateMaskError(f"shape {ids[i]} left the frame during alignment")
        sdf = mask_to_sdf(aligned)
        sdf.setflags(write=False)
        aligned.setflags(write=False)
        shapes.append(AlignedShape(ids[i], int(cid), aligned, sdf, pose))

    if sigma is None:
        sigma = nearest_neighbour_sigma([s.sdf for s in shapes])
    return TrainingSet(tuple(shapes), tuple(class_names), float(sigma), ids[reference_index])


def align_to_training(current, ts, rotation_range_deg=180.0, align=True):
    """Align a level set to the training reference; returns (aligned sdf, pose)."""
    mask = sdf_to_mask(current)
    if is_degenerate(mask):
        raise DegenerateMaskError("current level set is degenerate")
    if not align:
        return reinitialize(current), IDENTITY
    pose = estimate_pose(mask, ts.reference.mask, rotation_range_deg)
    moved = warp_sdf(current, pose)
    if is_degenerate(sdf_to_mask(moved)):
        return reinitialize(current), IDENTITY
    return reinitialize(moved), pose


def to_image_frame(sdf, pose):
    """Map an aligned-frame level set back to the image frame."""
    return warp_sdf(sdf, pose.inverse())
