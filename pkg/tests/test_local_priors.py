import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mcmcshape.energy import (ChanVeseParams, perturbation_field, shape_energy, shape_term)
from mcmcshape.local_priors import (LocalPrior, blend_weights, composite_perturbation,
                                    local_shape_energy, make_patch_layout, parse_patch_grid,
                                    patch_distances, patch_sigmas, patch_similarities,
                                    select_patch_sources)
from mcmcshape.grid import l2_distances
from mcmcshape.sampler import ChainConfig, RunConfig, run_sampling
from mcmcshape.selection import SelectionRecord

from conftest import disk, field_set


def test_four_by_four_into_two_by_two():
    lay = make_patch_layout((4, 4), 2, 2)
    assert lay.rects == [(0, 2, 0, 2), (0, 2, 2, 4), (2, 4, 0, 2), (2, 4, 2, 4)]


def test_last_row_absorbs_remainder():
    lay = make_patch_layout((5, 4), 2, 1)
    assert [r1 - r0 for r0, r1, _, _ in lay.rects] == [2, 3]


@given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 6), st.integers(1, 6))
def test_layout_tiles_grid_exactly(h, w, r, c):
    if r > h or c > w:
        with pytest.raises(ValueError):
            make_patch_layout((h, w), r, c)
        return
    lay = make_patch_layout((h, w), r, c)
    cover = np.zeros((h, w), int)
    for sl in lay.slices():
        cover[sl] += 1
    assert np.all(cover == 1) and len(lay.rects) == r * c
    sig = patch_sigmas(lay, 2.0)
    assert sum(s * s for s in sig) == pytest.approx(4.0)


def test_parse_patch_grid():
    assert parse_patch_grid("2x4") == (2, 4)
    assert parse_patch_grid("3X1") == (3, 1)
    with pytest.raises(ValueError):
        parse_patch_grid("two by four")


def test_patch_sigma_formula():
    lay = make_patch_layout((64, 64), 2, 4)
    for s in patch_sigmas(lay, 8.0):
        assert s == pytest.approx(8.0 * math.sqrt(32 * 16 / 4096))


@given(st.integers(0, 5), st.integers(1, 4), st.integers(1, 4))
def test_blend_weights_partition_unity(width, r, c):
    lay = make_patch_layout((20, 17), r, c)
    ws = blend_weights(lay, width)
    assert len(ws) == r * c
    assert all(np.all(w >= 0) for w in ws)
    np.testing.assert_allclose(np.sum(ws, axis=0), 1.0, atol=1e-12)


def test_blend_is_hard_away_from_borders():
    lay = make_patch_layout((20, 20), 2, 1)
    w0, w1 = blend_weights(lay, 3)
    assert np.all(w0[:8] == 1) and np.all(w1[12:] == 1)
    assert np.all((w0[9:11] > 0) & (w0[9:11] < 1))


def test_patch_distances_partition_the_global_distance(rng):
    phi = rng.normal(size=(12, 10))
    stack = rng.normal(size=(3, 12, 10))
    lay = make_patch_layout((12, 10), 3, 2)
    per_patch = patch_distances(phi, stack, lay)
    np.testing.assert_allclose(np.sum([d * d for d in per_patch], axis=0),
                               l2_distances(phi, stack) ** 2)


def halves():
    """Training shape A matches a target on top, B matches it on the bottom."""
    dims = (16, 16)
    target = np.where(disk(dims, 8, 8, 5), -1.0, 1.0) * 3
    a, b = target.copy(), target.copy()
    a[8:] = -target[8:]
    b[:8] = -target[:8]
    return dims, target, a, b


def test_patch_selection_follows_local_match():
    dims, target, a, b = halves()
    ts = field_set([[a, b]], 6.0)
    lay = make_patch_layout(dims, 2, 1)
    ls = [np.log(p) for p in patch_similarities(target, ts, 0, lay)]
    rng = np.random.default_rng(0)
    top = bottom = 0
    for _ in range(1000):
        sel = select_patch_sources(rng, ls, 1)
        top += sel.records[0].shape_indices[0] == 0
        bottom += sel.records[1].shape_indices[0] == 1
    assert top >= 900 and bottom >= 900


def test_single_training_shape_is_chosen_everywhere(rng):
    ts = field_set([[rng.normal(size=(8, 8))]], 3.0)
    lay = make_patch_layout((8, 8), 2, 2)
    ls = [np.log(p) for p in patch_similarities(rng.normal(size=(8, 8)), ts, 0, lay)]
    sel = select_patch_sources(rng, ls, 3)
    assert all(r.shape_indices == (0, 0, 0) for r in sel.records) and sel.log_prob == 0.0


def test_one_patch_field_equals_global_field(rng):
    shapes = [rng.normal(size=(10, 10)) for _ in range(3)]
    ts = field_set([shapes], 4.0)
    phi = rng.normal(size=(10, 10))
    image = rng.uniform(0, 255, size=(10, 10))
    sel = SelectionRecord(0, (2, 0, 2), 0.0)
    lay = make_patch_layout((10, 10), 1, 1)
    from mcmcshape.local_priors import PatchSelection

    psel = PatchSelection(0, (sel,), 0.0)
    p = ChanVeseParams(mu_length=0.0)
    assert np.array_equal(composite_perturbation(phi, psel, image, ts, p, 0.7, lay),
                          perturbation_field(phi, sel, image, ts, p, 0.7))
    assert local_shape_energy(phi, ts, lay) == shape_energy(phi, ts)


def test_shape_pull_vanishes_when_all_patches_match(rng):
    phi = rng.normal(size=(12, 12))
    ts = field_set([[phi.copy(), phi.copy()]], 2.0)
    lay = make_patch_layout((12, 12), 2, 3)
    model = LocalPrior(ts, lay)
    sel = model.draw(rng, model.log_similarities(phi, 0), 2, 0)
    assert np.array_equal(model.shape_field(phi, sel), np.zeros((12, 12)))


def test_two_half_pull_points_toward_each_source():
    dims, target, a, b = halves()
    ts = field_set([[a, b]], 6.0)
    lay = make_patch_layout(dims, 2, 1)
    phi = np.zeros(dims)
    from mcmcshape.local_priors import PatchSelection

    sel = PatchSelection(0, (SelectionRecord(0, (0,), 0.0), SelectionRecord(0, (1,), 0.0)), 0.0)
    f = LocalPrior(ts, lay, blend_width=3).shape_field(phi, sel)
    band = np.zeros(dims, bool)
    band[6:10] = True
    want = np.where(np.arange(16)[:, None] < 8, a, b)
    agree = np.sign(f[~band]) == np.sign(want[~band])
    assert agree.mean() >= 0.95


def test_one_by_one_local_run_is_bit_identical_to_global(two_disk_set):
    image = np.where(disk((16, 16), 8, 8, 5), 200.0, 50.0)
    cfg = ChainConfig(n_iters=20, gamma=3, data_only_iters=10, align=False, beta_shape=50.0)
    glob = run_sampling(image, two_disk_set, RunConfig(4, cfg))
    loc = run_sampling(image, two_disk_set, RunConfig(4, replace(cfg, patch_grid=(1, 1))))
    assert [r.fingerprint() for r in glob] == [r.fingerprint() for r in loc]


def test_layout_must_match_training_dims(two_disk_set):
    with pytest.raises(ValueError):
        LocalPrior(two_disk_set, make_patch_layout((8, 8), 1, 1))
