import numpy as np
import pytest

from noisectl.collab import CollabParams
from noisectl.decompose import DecompParams, MaskVolume
from noisectl.exceptions import ConfigError
from noisectl.prior import MODES, NoisePrior


@pytest.fixture(scope="module")
def masks():
    rng = np.random.default_rng(0)
    return MaskVolume((rng.random((6, 4, 1, 6, 6)) < 0.5).astype(float))


def _prior(mode, k=2, seed=0):
    return NoisePrior(DecompParams(), CollabParams.init(4, k), mode, seed)


def test_unknown_mode_is_a_config_error():
    with pytest.raises(ConfigError):
        _prior("bogus")


@pytest.mark.parametrize("mode", MODES)
def test_draws_are_reproducible_and_distinct(mode, masks):
    p = _prior(mode)
    a, b = p.composed(masks, 3), p.composed(masks, 3)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, p.composed(masks, 4))
    assert a.shape == masks.shape


@pytest.mark.parametrize("mode", ["nodecomp", "baseline"])
def test_single_scene_modes_ignore_foreground(mode, masks):
    d = _prior(mode).draw(masks)
    assert np.all(d.masks.mask_b == 1.0)
    np.testing.assert_array_equal(d.masked_f, 0.0)


def test_window_zero_switches_collaboration_off(masks):
    assert _prior("full").collaborates
    assert not _prior("full", k=0).collaborates
    assert not _prior("nocollab").collaborates


def test_frame_one_is_mode_independent_for_decomposed_modes(masks):
    full = _prior("full").composed(masks)
    fresh = _prior("nocollab").composed(masks)
    np.testing.assert_array_equal(full[:, 0], fresh[:, 0])
    assert not np.array_equal(full[:, 1], fresh[:, 1])


def test_sampler_offsets_the_draw_index(masks):
    p = _prior("full")
    np.testing.assert_array_equal(p.sampler(masks, offset=10)(2), p.composed(masks, 12))
