import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisectl.collab import CollabParams, roll_sequence
from noisectl.decompose import (DecompParams, MaskVolume, compose_initial, sample_first_frame_shared,
                                sample_residual)
from noisectl.exceptions import ParameterError, ValidationError
from noisectl.tensor import StreamKey

positive = st.floats(0.05, 20.0, allow_nan=False, allow_infinity=False)


@given(positive, positive)
def test_shared_and_residual_variances_sum_to_one(eta, lam):
    p = DecompParams(eta, lam)
    assert p.shared_var_b + p.residual_var_b == pytest.approx(1.0, abs=1e-12)
    assert p.shared_var_f + p.residual_var_f == pytest.approx(1.0, abs=1e-12)


def test_variance_formula_at_eta_two():
    p = DecompParams(2.0, 0.5)
    assert p.shared_var_b == pytest.approx(0.8)
    assert p.residual_var_b == pytest.approx(0.2)
    assert p.shared_var_f == pytest.approx(0.2)


def test_nonpositive_params_rejected():
    with pytest.raises(ParameterError):
        DecompParams(0.0, 1.0)


def test_masks_must_be_binary():
    with pytest.raises(ValidationError):
        MaskVolume(np.full((6, 2, 1, 3, 3), 0.5))


def test_foreground_mask_is_complement():
    m = MaskVolume((np.random.default_rng(0).random((6, 2, 1, 3, 3)) < 0.5).astype(float))
    np.testing.assert_array_equal(m.mask_b + m.mask_f, np.ones(m.shape))


def _noise(seed, hw=(4, 4), frames=3):
    p = DecompParams()
    key = StreamKey(seed)
    first = sample_first_frame_shared(p, key, (1,) + hw)
    return roll_sequence(first, p, CollabParams.init(frames, 2), frames, key)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_composition_is_exact_and_disjoint(seed):
    noise = _noise(seed)
    mask = (np.random.default_rng(seed).random((6, 3, 1, 4, 4)) < 0.5).astype(float)
    nb, nf, eps = compose_initial(noise, MaskVolume(mask))
    assert np.array_equal(eps, nb + nf)
    assert not np.any(nb * nf)


def test_all_background_mask_passes_background_noise_through():
    noise = _noise(1)
    nb, nf, eps = compose_initial(noise, MaskVolume.ones(3, 4, 4))
    np.testing.assert_array_equal(eps, noise.full("B"))
    assert not nf.any()


def test_residual_draws_differ_per_frame():
    p = DecompParams()
    r1 = sample_residual(p, 1, StreamKey(0), (1, 4, 4))
    r2 = sample_residual(p, 2, StreamKey(0), (1, 4, 4))
    assert not np.array_equal(r1["B"], r2["B"])
    with pytest.raises(ParameterError):
        sample_residual(p, 0, StreamKey(0), (1, 4, 4))
