"""Energy terms and their gradients.

Data term: two-phase piecewise-constant (Chan-Vese) energy with a smoothed
Heaviside. Shape term: Parzen density over aligned training level sets with a
1D Gaussian kernel on the L2 distance. All kernel sums are taken in the log
domain.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .grid import check_same_dims, l2_distances, log_gaussian_kernel, logsumexp

FULL = "full"
SHAPE_ONLY = "shape_only"
TARGET_MODES = (FULL, SHAPE_ONLY)

# regularizes |grad H(phi)| where the smoothed indicator is flat
_TV_ETA = 1e-3


@dataclass(frozen=True)
class ChanVeseParams:
    """``epsilon = 0`` selects the hard (step) Heaviside; its energy has no gradient."""

    epsilon: float = 1.5
    lambda1: float = 1.0
    lambda2: float = 1.0
    mu_length: float = 0.1 * 255.0**2

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.lambda1 <= 0 or self.lambda2 <= 0:
            raise ValueError("region weights must be positive")
        if self.mu_length < 0:
            raise ValueError("length weight must be >= 0")

    def without_length(self):
        return replace(self, mu_length=0.0)


@dataclass(frozen=True)
class EnergyBreakdown:
    e_data: float
    e_shape: float
    e_total: float
    beta_shape: float
    mode: str = FULL


def heaviside(z, eps):
    if eps == 0:
        return (np.asarray(z) > 0).astype(float)
    return 0.5 * (1.0 + (2.0 / math.pi) * np.arctan(z / eps))


def dirac(z, eps):
    if eps == 0:
        return np.zeros(np.shape(z))
    return (eps / math.pi) / (eps * eps + z * z)


def region_means(image, sdf, eps):
    h_in = heaviside(-sdf, eps)
    h_out = 1.0 - h_in
    w_in, w_out = h_in.sum(), h_out.sum()
    c1 = float((h_in * image).sum() / w_in) if w_in > 0 else 0.0
    c2 = float((h_out * image).sum() / w_out) if w_out > 0 else 0.0
    return c1, c2, h_in


def _forward_diffs(phi):
    dx = np.zeros_like(phi)
    dy = np.zeros_like(phi)
    dx[:, :-1] = phi[:, 1:] - phi[:, :-1]
    dy[:-1, :] = phi[1:, :] - phi[:-1, :]
    return dx, dy


def length_energy(sdf, eps):
    """Curve length as the total variation of the smoothed indicator H(-phi).

    Forward differences; the eta regularization adds a constant per pixel.
    """
    u = heaviside(-np.asarray(sdf, dtype=float), eps)
    ux, uy = _forward_diffs(u)
    return float(np.sqrt(ux * ux + uy * uy + _TV_ETA**2).sum())


def length_gradient(sdf, eps):
    """Exact gradient of :func:`length_energy` with respect to every pixel."""
    phi = np.asarray(sdf, dtype=float)
    if eps == 0:
        return np.zeros_like(phi)
    u = heaviside(-phi, eps)
    ux, uy = _forward_diffs(u)
    g = np.sqrt(ux * ux + uy * uy + _TV_ETA**2)
    px, py = ux / g, uy / g
    # dL/du is minus the backward divergence of (px, py)
    dl_du = np.zeros_like(phi)
    dl_du[:, :-1] -= px[:, :-1]
    dl_du[:, 1:] += px[:, :-1]
    dl_du[:-1, :] -= py[:-1, :]
    dl_du[1:, :] += py[:-1, :]
    # du/dphi = -delta(phi)
    return -dirac(phi, eps) * dl_du


def chan_vese_energy(image, sdf, p=ChanVeseParams()):
    image = np.asarray(image, dtype=float)
    sdf = np.asarray(sdf, dtype=float)
    check_same_dims(image, sdf)
    c1, c2, h_in = region_means(image, sdf, p.epsilon)
    e = (p.lambda1 * (h_in * (image - c1) ** 2).sum()
         + p.lambda2 * ((1.0 - h_in) * (image - c2) ** 2).sum())
    if p.mu_length:
        e += p.mu_length * length_energy(sdf, p.epsilon)
    return float(e)


def chan_vese_gradient(image, sdf, p=ChanVeseParams()):
    """dE_data/dphi at every pixel (ascent direction).

    The region means are the minimisers of the energy for fixed phi, so their
    own variation does not contribute.
    """
    image = np.asarray(image, dtype=float)
    sdf = np.asarray(sdf, dtype=float)
    check_same_dims(image, sdf)
    c1, c2, _ = region_means(image, sdf, p.epsilon)
    force = p.lambda1 * (image - c1) ** 2 - p.lambda2 * (image - c2) ** 2
    grad = -dirac(sdf, p.epsilon) * force
    if p.mu_length:
        grad = grad + p.mu_length * length_gradient(sdf, p.epsilon)
    return grad


def chan_vese_descent(image, sdf, p=ChanVeseParams()):
    return -chan_vese_gradient(image, sdf, p)


# -- shape prior ---------------------------------------------------------------

def log_class_densities_from_distances(dists, sigma):
    """Per-class log mean kernel value, given one distance vector per class."""
    return np.array([logsumexp(log_gaussian_kernel(d, sigma)) - math.log(len(d))
                     for d in dists])


def log_prior_from_distances(dists, sigma):
    lc = log_class_densities_from_distances(dists, sigma)
    return float(logsumexp(lc) - math.log(len(lc)))


def log_class_densities(sdf, ts):
    """log p'_i = log( (1/m_i) sum_j k(d(phi, phi_ij), sigma) ) for every class."""
    return log_class_densities_from_distances([l2_distances(sdf, s) for s in ts.stacks],
                                              ts.sigma)


def class_conditional_density(sdf, ts, class_id):
    stack = ts.class_stack(class_id)
    lk = log_gaussian_kernel(l2_distances(sdf, stack), ts.sigma)
    return float(np.exp(logsumexp(lk) - math.log(len(stack))))


def log_shape_prior(sdf, ts):
    return log_prior_from_distances([l2_distances(sdf, s) for s in ts.stacks], ts.sigma)


def shape_prior_density(sdf, ts):
    return math.exp(log_shape_prior(sdf, ts))


def shape_energy(sdf, ts):
    return -log_shape_prior(sdf, ts)


def log_shape_similarities(sdf, ts, class_id):
    return log_gaussian_kernel(l2_distances(sdf, ts.class_stack(class_id)), ts.sigma)


def shape_similarities(sdf, ts, class_id):
    """Kernel value of each shape in ``class_id`` at the current level set."""
    return np.exp(log_shape_similarities(sdf, ts, class_id))


def subset_shape_energy(sdf, selected, sigma):
    """-log of the Parzen estimate formed by the selected level sets only."""
    lk = log_gaussian_kernel(l2_distances(sdf, selected), sigma)
    return float(-(logsumexp(lk) - math.log(len(selected))))


def shape_term(sdf, selected, sigma):
    """Negative gradient of :func:`subset_shape_energy`.

    Equals (1/p) (1/g) (1/sigma^2) sum_j k(d_j) (phi_j - phi) with p the subset
    Parzen estimate, i.e. a kernel-weighted pull toward the selected shapes.
    """
    selected = np.asarray(selected, dtype=float)
    if len(selected) == 0:
        raise ValueError("empty selection")
    sdf = np.asarray(sdf, dtype=float)
    return shape_pull(sdf, selected, l2_distances(sdf, selected), sigma)


def shape_pull(sdf, selected, dists, sigma):
    """(sum_j w_j phi_j - phi) / sigma^2 with w_j proportional to k(dists_j, sigma)."""
    lk = log_gaussian_kernel(dists, sigma)
    w = np.exp(lk - logsumexp(lk))
    return np.tensordot(w, selected - sdf, axes=1) / (sigma * sigma)


def perturbation_field(sdf, selection, image, ts, p, beta_shape):
    """Data descent direction plus ``beta_shape`` times the selected-subset shape pull."""
    indices = selection.shape_indices
    if len(indices) == 0:
        raise ValueError("empty selection")
    selected = ts.class_stack(selection.class_id)[np.asarray(indices)]
    field = chan_vese_descent(image, sdf, p)
    if beta_shape:
        field = field + beta_shape * shape_term(sdf, selected, ts.sigma)
    return field


def total_energy(image, sdf, ts, p, beta_shape=1.0, mode=FULL, e_shape=None):
    """Energy of a level set under the chosen target.

    ``full``: e_data + beta * e_shape. ``shape_only``: e_shape alone (the data
    term is still reported). ``e_shape`` may be supplied by callers that use a
    different prior (e.g. patch-wise local priors).
    """
    if mode not in TARGET_MODES:
        raise ValueError(f"unknown target mode {mode!r}")
    check_same_dims(image, sdf)
    e_data = chan_vese_energy(image, sdf, p)
    if e_shape is None:
        e_shape = shape_energy(sdf, ts)
    if mode == FULL:
        e_total = e_data + beta_shape * e_shape
    else:
        e_total = e_shape
    return EnergyBreakdown(float(e_data), float(e_shape), float(e_total), float(beta_shape), mode)


def full_shape_term(sdf, ts):
    """Negative gradient of the full-set shape energy -log p_C (all classes, all shapes)."""
    sdf = np.asarray(sdf, dtype=float)
    lw, stacks = [], []
    for stack in ts.stacks:
        lw.append(log_gaussian_kernel(l2_distances(sdf, stack), ts.sigma) - math.log(len(stack)))
        stacks.append(stack)
    lw = np.concatenate(lw)
    w = np.exp(lw - logsumexp(lw))
    return np.tensordot(w, np.concatenate(stacks) - sdf, axes=1) / (ts.sigma * ts.sigma)
