import copy
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mcmcshape.alignment import align_training_set
from mcmcshape.energy import ChanVeseParams
from mcmcshape.evaluation import precision_recall
from mcmcshape.experiments import UNIMODAL_BETA, aircraft_case
from mcmcshape.grid import mask_to_sdf, sdf_to_mask
from mcmcshape.sampler import (REVERSE_CANDIDATE, REVERSE_LITERAL, ChainConfig, RunConfig,
                               data_driven_init, default_init, initial_state, mh_step,
                               prior_model, propose, run_chain, run_sampling)
from mcmcshape.selection import select_subset
from mcmcshape.shapes import aircraft_corpus

from conftest import disk, field_set, normal_pdf

EPS = 1.5
SIGMA = 3.0
BETA = 0.5


def tiny_scenario():
    """Two training fields in one class and a bright square image, all 4x4."""
    a = np.array([[2, 1, 1, 2], [1, -1, -1, 1], [1, -1, -1, 1], [2, 1, 1, 2]], float)
    b = np.array([[1, 1, 2, 2], [-1, -1, 1, 2], [-1, -1, 1, 1], [1, 1, 1, 2]], float)
    ts = field_set([[a, b]], SIGMA)
    image = np.zeros((4, 4))
    image[1:3, 0:3] = 1.0
    image[0, 0] = 0.4
    phi0 = np.array([[1.5, 1, 0.5, 1], [0.5, -0.5, -0.2, 0.8],
                     [0.7, -0.6, 0.3, 1], [1.2, 1, 1, 1.5]], float)
    return ts, image, phi0, (a, b)


# -- independent hand formulas for the tiny scenario ---------------------------

def hand_kernels(phi, shapes):
    return [normal_pdf(math.sqrt(((s - phi) ** 2).sum()), SIGMA) for s in shapes]


def hand_energy(image, phi, shapes):
    h_in = 0.5 * (1 + (2 / math.pi) * np.arctan(-phi / EPS))
    c1 = (h_in * image).sum() / h_in.sum()
    c2 = ((1 - h_in) * image).sum() / (1 - h_in).sum()
    e_data = (h_in * (image - c1) ** 2).sum() + ((1 - h_in) * (image - c2) ** 2).sum()
    p = sum(hand_kernels(phi, shapes)) / len(shapes)
    return e_data + BETA * -math.log(p)


def hand_field(image, phi, shapes, idx):
    h_in = 0.5 * (1 + (2 / math.pi) * np.arctan(-phi / EPS))
    c1 = (h_in * image).sum() / h_in.sum()
    c2 = ((1 - h_in) * image).sum() / (1 - h_in).sum()
    delta = (EPS / math.pi) / (EPS ** 2 + phi ** 2)
    f = delta * ((image - c1) ** 2 - (image - c2) ** 2)
    ks = [hand_kernels(phi, [shapes[i]])[0] for i in idx]
    pull = sum(k * (shapes[i] - phi) for k, i in zip(ks, idx)) / sum(ks) / SIGMA ** 2
    return f + BETA * pull


def hand_log_q(phi, shapes, idx):
    ks = hand_kernels(phi, shapes)
    return sum(math.log(ks[i] / sum(ks)) for i in idx)


@pytest.mark.parametrize("mode", [REVERSE_CANDIDATE, REVERSE_LITERAL])
def test_mh_ratio_matches_hand_computation(mode):
    ts, image, phi0, shapes = tiny_scenario()
    cfg = ChainConfig(n_iters=3, gamma=3, alpha=1.0, max_step=1.0, beta_shape=BETA,
                      chan_vese=ChanVeseParams(epsilon=EPS, mu_length=0.0), reverse_eval=mode,
                      reinit_period=1000)
    model = prior_model(ts, cfg)
    rng = np.random.default_rng(99)
    s0 = initial_state(phi0, image, model, cfg, 0)
    assert s0.energy.e_total == pytest.approx(hand_energy(image, phi0, shapes), rel=1e-12)
    s1 = mh_step(s0, image, ts, cfg, rng, model)
    assert s1.accepted and math.isnan(s1.log_ratio)  # first step is forced

    for _ in range(4):
        replay = copy.deepcopy(rng)
        s2 = mh_step(s1, image, ts, cfg, rng, model)
        phi = s1.sdf
        fwd = s2.curr_selection.shape_indices
        f = hand_field(image, phi, shapes, fwd)
        cand = phi + min(1.0, 1.0 / np.abs(f).max()) * f
        if mode == REVERSE_CANDIDATE:
            log_q_rev = hand_log_q(cand, shapes, s1.curr_selection.shape_indices)
        else:
            # recorded when drawn, i.e. at the curve the previous step started from
            log_q_rev = hand_log_q(s0.sdf, shapes, s1.curr_selection.shape_indices)
        expected = (hand_energy(image, phi, shapes) - hand_energy(image, cand, shapes)
                    + log_q_rev - hand_log_q(phi, shapes, fwd))
        assert s2.log_ratio == pytest.approx(expected, abs=1e-10)

        # the acceptance decision uses the same uniform the chain drew
        select_subset(replay, np.log(hand_kernels(phi, shapes)), cfg.gamma, 0)
        eta = replay.random()
        assert s2.accepted == (eta < math.exp(min(expected, 0.0)))
        if s2.accepted:
            np.testing.assert_allclose(s2.sdf, cand, atol=1e-12)
        else:
            assert s2.sdf is phi and s2.energy == s1.energy
        assert s2.prev_selection == s1.curr_selection
        s0, s1 = s1, s2


def test_rejection_keeps_state_but_advances_selection():
    ts, image, phi0, _ = tiny_scenario()
    cfg = ChainConfig(n_iters=3, gamma=2, beta_shape=BETA,
                      chan_vese=ChanVeseParams(epsilon=EPS, mu_length=0.0))
    model = prior_model(ts, cfg)
    rng = np.random.default_rng(5)
    state = mh_step(initial_state(phi0, image, model, cfg, 0), image, ts, cfg, rng, model)
    seen_reject = False
    for _ in range(300):
        nxt = mh_step(state, image, ts, cfg, rng, model)
        assert nxt.t == state.t + 1
        assert nxt.prev_selection is state.curr_selection
        if not nxt.accepted:
            seen_reject = True
            assert np.array_equal(nxt.sdf, state.sdf)
            assert nxt.energy == state.energy
            assert nxt.n_accepted == state.n_accepted
        state = nxt
    assert seen_reject


def test_first_iteration_always_accepted(two_disk_set):
    image = disk((16, 16), 8, 8, 4) * 200.0
    cfg = ChainConfig(n_iters=5, gamma=2, data_only_iters=5, align=False)
    recs = run_sampling(image, two_disk_set, RunConfig(6, cfg))
    for r in recs:
        assert r.accepted[0]
        assert len(r.energy_trace) == 5 == len(r.accepted)
        assert r.accept_count == sum(r.accepted)


@given(arrays(float, (5, 5), elements=st.floats(-10, 10)),
       arrays(float, (5, 5), elements=st.floats(-10, 10)),
       st.floats(0, 3), st.floats(0, 3))
def test_propose_is_linear_in_alpha(phi, f, a, b):
    np.testing.assert_allclose(propose(propose(phi, f, a), f, b), propose(phi, f, a + b),
                               atol=1e-9)
    assert np.array_equal(propose(phi, f, 0.0), phi)


def test_propose_reaches_target_in_one_unit_step(rng):
    phi = rng.normal(size=(6, 6))
    target = rng.normal(size=(6, 6))
    np.testing.assert_allclose(propose(phi, target - phi, 1.0), target)
    with pytest.raises(ValueError):
        propose(phi, np.full((6, 6), np.nan), 1.0)


# -- initialization ------------------------------------------------------------

def test_zero_data_iterations_give_the_default_circle():
    image = np.zeros((32, 40))
    phi = data_driven_init(image, ChainConfig(data_only_iters=0))
    np.testing.assert_array_equal(sdf_to_mask(phi), sdf_to_mask(default_init((32, 40))))
    r = 0.25 * 32
    assert abs(sdf_to_mask(phi).sum() - math.pi * r * r) < 0.1 * math.pi * r * r


def test_data_driven_init_segments_clean_disk():
    gt = disk((48, 48), 20, 27, 11)
    image = np.where(gt, 200.0, 50.0)
    cfg = ChainConfig(data_only_iters=300)
    phi = data_driven_init(image, cfg)
    assert precision_recall(sdf_to_mask(phi), gt).f_measure >= 0.98
    np.testing.assert_array_equal(phi, data_driven_init(image, cfg))


def test_non_finite_image_is_rejected():
    image = np.ones((8, 8))
    image[2, 2] = np.nan
    with pytest.raises(ValueError):
        data_driven_init(image)


# -- chains ------------------------------------------------------------------

def test_single_shape_prior_pulls_sample_onto_it():
    corpus = aircraft_corpus()
    mask = corpus[3]
    # one shape has no nearest neighbour, so pick a kernel size of corpus scale
    ts = align_training_set([(mask, 0)], class_names=("shape",), sigma=20.0)
    _, case = aircraft_case(3, snr_db=6.0, seed=0, corpus=corpus)
    image, gt = case.image, mask
    cfg = ChainConfig(n_iters=200, beta_shape=UNIMODAL_BETA, target_mode="shape_only")
    rec = run_chain(image, ts, cfg)
    assert precision_recall(rec.final_mask_image_frame, gt).f_measure >= 0.95


def test_chains_are_deterministic_and_independent(two_disk_set):
    image = np.where(disk((16, 16), 8, 8, 5), 200.0, 50.0)
    cfg = ChainConfig(n_iters=15, gamma=2, data_only_iters=10, align=False, seed=4)
    run = RunConfig(5, cfg)
    a = [r.fingerprint() for r in run_sampling(image, two_disk_set, run)]
    b = [r.fingerprint() for r in run_sampling(image, two_disk_set, run)]
    assert a == b
    sub = [r.fingerprint() for r in run_sampling(image, two_disk_set, run, chain_ids=[3, 1])]
    assert sub == [a[3], a[1]]
    assert run_chain(image, two_disk_set, cfg, chain_id=2).fingerprint() == a[2]
    other = [r.fingerprint() for r in run_sampling(image, two_disk_set,
                                                    RunConfig(5, replace(cfg, seed=5)))]
    assert other != a


def test_serial_and_parallel_runs_agree(two_disk_set):
    image = np.where(disk((16, 16), 8, 8, 5), 200.0, 50.0)
    run = RunConfig(4, ChainConfig(n_iters=10, gamma=2, data_only_iters=5, align=False))
    serial = [r.fingerprint() for r in run_sampling(image, two_disk_set, run, workers=1)]
    parallel = [r.fingerprint() for r in run_sampling(image, two_disk_set, run, workers=2)]
    assert serial == parallel


def test_three_class_run_visits_several_classes():
    from mcmcshape.experiments import multimodal_setup, unimodal_config

    ts, case = multimodal_setup(0)
    image = case.image
    cfg = replace(unimodal_config(0, 3), align=False)
    recs = run_sampling(image, ts, RunConfig(100, cfg))
    assert len({r.class_id for r in recs}) >= 2


def test_image_dims_must_match_training(two_disk_set):
    with pytest.raises(ValueError):
        run_chain(np.zeros((10, 10)), two_disk_set, ChainConfig(n_iters=1))


def test_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(n_iters=0)
    with pytest.raises(ValueError):
        ChainConfig(reverse_eval="sideways")
    with pytest.raises(ValueError):
        RunConfig(0)
    cfg = ChainConfig(patch_grid=[2, 3])
    assert ChainConfig.from_dict(cfg.to_dict()) == cfg
