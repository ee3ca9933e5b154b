"""Segmentation metrics, sample statistics and the deterministic baseline."""

from dataclasses import dataclass

import numpy as np

from .alignment import to_image_frame
from .energy import chan_vese_descent, full_shape_term, total_energy
from .grid import check_same_dims, is_degenerate, reinitialize, sdf_to_mask
from .sampler import prepare_start, propose, step_size

MCB_LEVELS = (0.1, 0.9)


@dataclass(frozen=True)
class PRResult:
    precision: float
    recall: float
    f_measure: float


def precision_recall(pred, gt):
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    check_same_dims(pred, gt)
    n_gt = int(gt.sum())
    if n_gt == 0:
        raise ValueError("ground truth is empty; precision/recall are undefined")
    n_pred = int(pred.sum())
    hit = int(np.count_nonzero(pred & gt))
    precision = hit / n_pred if n_pred else 0.0
    recall = hit / n_gt
    f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return PRResult(precision, recall, f)


def histogram_image(samples):
    """Fraction of samples that contain each pixel."""
    samples = [np.asarray(s, dtype=bool) for s in samples]
    if not samples:
        raise ValueError("no samples")
    check_same_dims(*samples)
    counts = np.sum(samples, axis=0)
    return counts / float(len(samples))


def confidence_bounds(h, levels=MCB_LEVELS):
    """Superlevel masks {H >= level} for each level."""
    h = np.asarray(h, dtype=float)
    out = {}
    for lv in levels:
        if not 0 < lv < 1:
            raise ValueError(f"level {lv} outside (0, 1)")
        out[lv] = h >= lv
    return out


def mask_boundary(mask):
    """Inside pixels with at least one 4-neighbour outside (frame edge counts as outside)."""
    m = np.asarray(mask, dtype=bool)
    padded = np.pad(m, 1, constant_values=False)
    interior = (padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:])
    return m & ~interior


def class_counts(records, n_classes):
    counts = np.zeros(n_classes, dtype=int)
    for r in records:
        if not 0 <= r.class_id < n_classes:
            raise ValueError(f"class id {r.class_id} outside [0, {n_classes})")
        counts[r.class_id] += 1
    return counts


def mean_traces(records, field="e_shape"):
    """Per-class iteration-wise mean of an energy component, {class_id: array}."""
    by_class = {}
    for r in records:
        by_class.setdefault(r.class_id, []).append([getattr(e, field) for e in r.energy_trace])
    return {c: np.mean(np.array(v), axis=0) for c, v in sorted(by_class.items())}


def best_sample(records, gt):
    """(index, PRResult) of the sample with the highest F-measure."""
    scores = [precision_recall(r.final_mask_image_frame, gt) for r in records]
    k = int(np.argmax([s.f_measure for s in scores]))
    return k, scores[k]


def best_by_energy(records, per_class=3, field="e_total"):
    """Indices of the lowest-energy samples in every class, {class_id: [indices]}."""
    out = {}
    for k, r in enumerate(records):
        out.setdefault(r.class_id, []).append(k)
    return {c: sorted(ix, key=lambda k: getattr(records[k].final_energy, field))[:per_class]
            for c, ix in sorted(out.items())}


def gd_baseline(image, ts, cfg, start=None, with_energy=False):
    """Deterministic gradient descent on data + full-set shape energy.

    Same initialization, alignment, step rule and iteration budget as one
    chain, but every training shape enters the shape force and nothing is
    random or rejected. With ``with_energy`` the final energy (under the
    chain's target and the full training set) is returned as well.
    """
    if start is None:
        start = prepare_start(image, ts, cfg)
    phi, pose, aligned_image = start.sdf, start.pose, start.aligned_image
    params = cfg.chan_vese.without_length()
    for it in range(cfg.n_iters):
        f = chan_vese_descent(aligned_image, phi, params) + cfg.beta_shape * full_shape_term(phi, ts)
        phi = propose(phi, f, step_size(f, cfg))
        if (it + 1) % cfg.reinit_period == 0 and not is_degenerate(sdf_to_mask(phi)):
            phi = reinitialize(phi)
    mask = sdf_to_mask(to_image_frame(phi, pose))
    if with_energy:
        e = total_energy(aligned_image, phi, ts, cfg.chan_vese.without_length(),
                         cfg.beta_shape, cfg.target_mode)
        return mask, e
    return mask
