"""Metropolis-Hastings shape sampling with nonparametric shape priors.

One chain yields one sample: data-only initialization, alignment to the
training frame, a single random class decision, then ``n_iters`` MH steps whose
proposals are gradient steps built from randomly selected training shapes.
"""

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .alignment import align_to_training, to_image_frame, warp_scalar
from .energy import (
    FULL,
    SHAPE_ONLY,
    TARGET_MODES,
    ChanVeseParams,
    EnergyBreakdown,
    chan_vese_descent,
    log_class_densities,
    log_shape_similarities,
    shape_energy,
    shape_term,
    total_energy,
)
from .grid import is_degenerate, mask_to_sdf, reinitialize, sdf_to_mask
from .selection import (
    SelectionRecord,
    select_class,
    select_subset,
    selection_log_prob,
)

REVERSE_CANDIDATE = "candidate"
REVERSE_LITERAL = "literal_prev_curve"


@dataclass(frozen=True)
class ChainConfig:
    n_iters: int = 300
    gamma: int = 5
    alpha: float = 1.0
    # cap on max |alpha * f| per step, in pixels; None disables the clamp
    max_step: float = 1.0
    data_only_iters: int = 300
    reinit_period: int = 10
    target_mode: str = FULL
    beta_shape: float = 1.0
    seed: int = 0
    chan_vese: ChanVeseParams = ChanVeseParams()
    reverse_eval: str = REVERSE_CANDIDATE
    align: bool = True
    rotation_range_deg: float = 180.0
    init_radius_frac: float = 0.25
    patch_grid: tuple = None
    blend_width: int = 3

    def __post_init__(self):
        if self.n_iters < 1:
            raise ValueError("n_iters must be >= 1")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.data_only_iters < 0 or self.reinit_period < 1:
            raise ValueError("invalid iteration counts")
        if self.target_mode not in TARGET_MODES:
            raise ValueError(f"unknown target mode {self.target_mode!r}")
        if self.reverse_eval not in (REVERSE_CANDIDATE, REVERSE_LITERAL):
            raise ValueError(f"unknown reverse evaluation {self.reverse_eval!r}")
        if self.patch_grid is not None:
            object.__setattr__(self, "patch_grid", tuple(int(x) for x in self.patch_grid))

    def to_dict(self):
        d = asdict(self)
        d["patch_grid"] = list(self.patch_grid) if self.patch_grid else None
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "chan_vese" in d and isinstance(d["chan_vese"], dict):
            d["chan_vese"] = ChanVeseParams(**d["chan_vese"])
        return cls(**d)


@dataclass(frozen=True)
class RunConfig:
    n_samples: int = 1
    chain: ChainConfig = ChainConfig()

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


@dataclass
class ChainState:
    t: int
    sdf: np.ndarray
    class_id: int
    prev_selection: object
    curr_selection: object
    energy: EnergyBreakdown
    n_accepted: int = 0
    accepted: bool = False
    log_ratio: float = math.nan
    flagged: bool = False


@dataclass(eq=False)
class SampleRecord:
    chain_id: int
    final_mask_image_frame: np.ndarray
    class_id: int
    energy_trace: list
    accepted: list
    accept_count: int
    selection_history_digest: str
    class_fallback: bool = False
    selection_fallbacks: int = 0
    flagged_steps: int = 0
    pose: dict = field(default_factory=dict)

    @property
    def final_energy(self):
        return self.energy_trace[-1]

    @property
    def accept_rate(self):
        return self.accept_count / len(self.energy_trace)

    def fingerprint(self):
        """Hash of every field; equal records have equal fingerprints."""
        h = hashlib.sha256()
        h.update(repr((self.chain_id, self.class_id, self.accept_count,
                       self.selection_history_digest, self.class_fallback,
                       self.selection_fallbacks, self.flagged_steps,
                       sorted(self.pose.items()), self.accepted)).encode())
        h.update(np.packbits(self.final_mask_image_frame).tobytes())
        h.update(str(self.final_mask_image_frame.shape).encode())
        for e in self.energy_trace:
            h.update(np.array([e.e_data, e.e_shape, e.e_total]).tobytes())
        return h.hexdigest()


class GlobalPrior:
    """Proposal machinery for whole-shape priors."""

    def __init__(self, ts):
        self.ts = ts

    def log_similarities(self, sdf, class_id):
        return log_shape_similarities(sdf, self.ts, class_id)

    def draw(self, rng, log_sims, gamma, class_id):
        return select_subset(rng, log_sims, gamma, class_id)

    def log_prob(self, selection, log_sims):
        return selection_log_prob(selection.shape_indices, log_sims)

    def shape_field(self, sdf, selection):
        stack = self.ts.class_stack(selection.class_id)
        return shape_term(sdf, stack[np.asarray(selection.shape_indices)], self.ts.sigma)

    def shape_energy(self, sdf):
        return shape_energy(sdf, self.ts)

    @staticmethod
    def digest_items(selection):
        return selection.shape_indices

    @staticmethod
    def n_fallbacks(selection):
        return int(selection.fallback)


def prior_model(ts, cfg):
    if cfg.patch_grid is None:
        return GlobalPrior(ts)
    from .local_priors import LocalPrior, make_patch_layout

    layout = make_patch_layout(ts.dims, *cfg.patch_grid)
    return LocalPrior(ts, layout, cfg.blend_width)


def chain_rng(seed, chain_id):
    """Independent stream for one chain, derived from the master seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(chain_id),)))


def step_size(field_, cfg):
    if cfg.max_step is None:
        return cfg.alpha
    peak = float(np.max(np.abs(field_)))
    if peak == 0:
        return cfg.alpha
    return min(cfg.alpha, cfg.max_step / peak)


def propose(sdf, field_, alpha):
    """Additive level-set update ``phi + alpha * f``."""
    field_ = np.asarray(field_, dtype=float)
    if not np.all(np.isfinite(field_)):
        raise ValueError("perturbation field has non-finite values")
    return np.asarray(sdf, dtype=float) + alpha * field_


def default_init(dims, radius_frac=0.25):
    h, w = dims
    rows, cols = np.mgrid[0:h, 0:w]
    r = radius_frac * min(h, w)
    disk = (rows - (h - 1) / 2.0) ** 2 + (cols - (w - 1) / 2.0) ** 2 < r * r
    return mask_to_sdf(disk)


def _maybe_reinit(phi):
    if is_degenerate(sdf_to_mask(phi)):
        return phi
    return reinitialize(phi)


def data_driven_init(image, cfg=ChainConfig()):
    """Descend the data term alone from a centered circle; returns an SDF.

    Deterministic: no random numbers are drawn.
    """
    image = np.asarray(image, dtype=float)
    if not np.all(np.isfinite(image)):
        raise ValueError("image contains non-finite values")
    phi = default_init(image.shape, cfg.init_radius_frac)
    for it in range(cfg.data_only_iters):
        f = chan_vese_descent(image, phi, cfg.chan_vese)
        phi = propose(phi, f, step_size(f, cfg))
        if (it + 1) % cfg.reinit_period == 0:
            phi = _maybe_reinit(phi)
    return _maybe_reinit(phi)


def _energy(image, sdf, model, cfg, params):
    return total_energy(image, sdf, model.ts, params, cfg.beta_shape, cfg.target_mode,
                        e_shape=model.shape_energy(sdf))


def initial_state(sdf, image, model, cfg, class_id):
    params = cfg.chan_vese.without_length()
    return ChainState(0, np.asarray(sdf, dtype=float), class_id, None, None,
                      _energy(image, sdf, model, cfg, params))


def mh_step(state, image, ts, cfg, rng, model=None):
    """One Metropolis-Hastings iteration; returns the next state.

    The forward probability is that of the new selection under similarities at
    the current curve. The reverse probability re-draws the previous selection,
    with similarities at the candidate (``reverse_eval='candidate'``) or as
    recorded when it was drawn (``'literal_prev_curve'``). The first iteration
    is accepted unconditionally. Selection history advances on rejection too.
    """
    model = model or prior_model(ts, cfg)
    params = cfg.chan_vese.without_length()
    phi = state.sdf
    r = state.class_id
    t_next = state.t + 1

    sel = model.draw(rng, model.log_similarities(phi, r), cfg.gamma, r)
    f = chan_vese_descent(image, phi, params) + cfg.beta_shape * model.shape_field(phi, sel)
    flagged = False
    try:
        cand = propose(phi, f, step_size(f, cfg))
        e_cand = _energy(image, cand, model, cfg, params)
        if not math.isfinite(e_cand.e_total):
            flagged = True
    except ValueError:
        cand, e_cand, flagged = None, None, True
    eta = rng.random()

    log_ratio = math.nan
    if flagged:
        accept = False
    elif t_next == 1 or state.curr_selection is None:
        accept = True
    else:
        log_q_fwd = sel.log_prob
        if cfg.reverse_eval == REVERSE_CANDIDATE:
            log_q_rev = model.log_prob(state.curr_selection, model.log_similarities(cand, r))
        else:
            log_q_rev = state.curr_selection.log_prob
        log_ratio = (state.energy.e_total - e_cand.e_total) + (log_q_rev - log_q_fwd)
        accept = eta < math.exp(min(log_ratio, 0.0))

    if accept:
        n_acc = state.n_accepted + 1
        new_phi, energy = cand, e_cand
        if n_acc % cfg.reinit_period == 0:
            new_phi = _maybe_reinit(new_phi)
            energy = _energy(image, new_phi, model, cfg, params)
    else:
        n_acc = state.n_accepted
        new_phi, energy = phi, state.energy

    return ChainState(t_next, new_phi, r, state.curr_selection, sel, energy, n_acc,
                      accept, log_ratio, flagged)


@dataclass(frozen=True)
class ChainStart:
    """Shared starting point of every chain on one image."""

    sdf: np.ndarray
    pose: object
    aligned_image: np.ndarray


def prepare_start(image, ts, cfg, init_sdf=None):
    """Data-only initialization followed by alignment to the training frame."""
    image = np.asarray(image, dtype=float)
    if image.shape != tuple(ts.dims):
        raise ValueError(f"image dims {image.shape} differ from training dims {ts.dims}")
    if init_sdf is None:
        init_sdf = data_driven_init(image, cfg)
    phi, pose = align_to_training(init_sdf, ts, cfg.rotation_range_deg, cfg.align)
    return ChainStart(phi, pose, warp_scalar(image, pose))


def run_chain(image, ts, cfg, chain_id=0, start=None):
    """Run one chain to completion and map its sample back to the image frame."""
    if start is None:
        start = prepare_start(image, ts, cfg)
    phi, pose, aligned_image = start.sdf, start.pose, start.aligned_image
    model = prior_model(ts, cfg)
    rng = chain_rng(cfg.seed, chain_id)

    class_id, class_fallback = select_class(rng, log_densities=log_class_densities(phi, ts))
    state = initial_state(phi, aligned_image, model, cfg, class_id)

    digest = hashlib.sha256()
    trace, accepted = [], []
    n_fallback = n_flagged = 0
    for _ in range(cfg.n_iters):
        state = mh_step(state, aligned_image, ts, cfg, rng, model)
        trace.append(state.energy)
        accepted.append(state.accepted)
        digest.update(repr(model.digest_items(state.curr_selection)).encode())
        n_fallback += model.n_fallbacks(state.curr_selection)
        n_flagged += int(state.flagged)

    final = sdf_to_mask(to_image_frame(state.sdf, pose))
    return SampleRecord(chain_id, final, class_id, trace, accepted, state.n_accepted,
                        digest.hexdigest(), class_fallback, n_fallback, n_flagged,
                        pose.as_dict())


def _chain_job(args):
    image, ts, cfg, chain_id, start = args
    return run_chain(image, ts, cfg, chain_id, start)


def run_sampling(image, ts, run_cfg, workers=1, chain_ids=None, start=None):
    """Run ``n_samples`` independent chains; results are ordered by chain id.

    Each chain draws from its own stream, so results do not depend on
    ``workers`` or on which other chains are run.
    """
    cfg = run_cfg.chain
    image = np.asarray(image, dtype=float)
    if start is None:
        start = prepare_start(image, ts, cfg)
    ids = list(range(run_cfg.n_samples)) if chain_ids is None else list(chain_ids)
    jobs = [(image, ts, cfg, k, start) for k in ids]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_chain_job, jobs))
    return [_chain_job(j) for j in jobs]
