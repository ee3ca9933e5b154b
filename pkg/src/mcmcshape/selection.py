"""Random class decision and similarity-weighted training-shape selection."""

import math
from dataclasses import dataclass

import numpy as np

from .grid import logsumexp


@dataclass(frozen=True)
class SelectionRecord:
    """``gamma`` draws (with replacement) from one class.

    ``log_prob`` is the log probability of drawing exactly these indices in this
    order; ``fallback`` marks draws made uniformly because every similarity
    underflowed.
    """

    class_id: int
    shape_indices: tuple
    log_prob: float
    fallback: bool = False


def normalized_log_probs(log_weights):
    """Log of ``w / sum(w)``; uniform (and flagged) when every weight is zero."""
    lw = np.asarray(log_weights, dtype=float)
    if lw.size == 0:
        raise ValueError("nothing to select from")
    total = logsumexp(lw)
    if not np.isfinite(total):
        return np.full(lw.shape, -math.log(lw.size)), True
    return lw - total, False


def select_class(rng, densities=None, log_densities=None):
    """Draw a class index with probability proportional to its density.

    Pass either plain ``densities`` or ``log_densities``; the log form keeps
    far-away classes from underflowing. Returns ``(class_id, fallback)``.
    """
    if log_densities is None:
        d = np.asarray(densities, dtype=float)
        if np.any(d < 0):
            raise ValueError("class densities must be non-negative")
        with np.errstate(divide="ignore"):
            log_densities = np.log(d)
    logp, fallback = normalized_log_probs(log_densities)
    return int(rng.choice(len(logp), p=np.exp(logp))), fallback


def select_subset(rng, log_similarities, gamma, class_id=0):
    """``gamma`` independent draws from the normalized similarity vector."""
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    logp, fallback = normalized_log_probs(log_similarities)
    idx = rng.choice(len(logp), size=gamma, p=np.exp(logp))
    return SelectionRecord(int(class_id), tuple(int(i) for i in idx),
                           float(logp[idx].sum()), fallback)


def selection_log_prob(indices, log_similarities):
    """Log probability of drawing ``indices`` under ``log_similarities``."""
    logp, _ = normalized_log_probs(log_similarities)
    return float(logp[np.asarray(indices, dtype=int)].sum())
