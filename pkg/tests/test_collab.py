import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisectl.collab import (CollabParams, contribution, first_frame_base_mode, history_from_noise,
                             roll_sequence, shared_next, window_start)
from noisectl.collab_oracle import oracle_shared_next
from noisectl.decompose import DecompParams, sample_first_frame_shared
from noisectl.exceptions import ParameterError, ShapeError, StateError
from noisectl.tensor import StreamKey


def random_params(rng, n=16, k=5, v=6):
    return CollabParams(rng.normal(size=(n, 2, v, v)), rng.normal(size=(k, 2, 2, v)), k)


@pytest.mark.parametrize("n,k,expected", [(1, 5, 1), (5, 5, 1), (6, 5, 2), (16, 5, 12), (3, 1, 3)])
def test_window_start(n, k, expected):
    assert window_start(n, k) == expected


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 16), st.integers(1, 5))
def test_vectorized_step_matches_loop_oracle(seed, n, k):
    rng = np.random.default_rng(seed)
    c = random_params(rng, k=k)
    start = window_start(n, k)
    hist = rng.normal(size=(n - start + 1, 2, 6, 1, 4, 4))
    fast = shared_next(hist, c, n)
    slow = oracle_shared_next(hist, c.S, c.I, c.K, n)
    assert np.max(np.abs(fast - slow)) <= 1e-10


def test_single_term_contribution():
    rng = np.random.default_rng(0)
    s, i, eps = rng.normal(size=(2, 6, 6)), rng.normal(size=(2, 2, 6)), rng.normal(size=(2, 6, 3))
    out = contribution(s, i, eps)
    # target channel 0 at view 2 by hand
    want = sum(i[d, 0, 2] * sum(s[d, 2, q] * eps[d, q] for q in range(6)) for d in range(2))
    np.testing.assert_allclose(out[0, 2], want, atol=1e-12)


def test_zero_window_and_empty_history():
    c0 = CollabParams.init(4, 0)
    with pytest.raises(ParameterError):
        shared_next(np.zeros((1, 2, 6, 1, 2, 2)), c0, 1)
    with pytest.raises(StateError):
        shared_next(np.zeros((0, 2, 6, 1, 2, 2)), CollabParams.init(4, 2), 1)


def test_init_layout():
    c = CollabParams.init(16, 5)
    np.testing.assert_array_equal(c.S[3, 1], np.eye(6) / 5)
    assert np.all(c.I[:, 0, 0] == 1) and np.all(c.I[:, 0, 1] == 0)


def test_bad_shapes_rejected():
    with pytest.raises(ShapeError):
        CollabParams(np.zeros((4, 2, 6, 5)), np.zeros((1, 2, 2, 6)), 1)
    with pytest.raises(ParameterError):
        CollabParams.init(3, 4)


def test_save_load(tmp_path):
    c = random_params(np.random.default_rng(2))
    c.save(tmp_path / "c.nctb")
    back = CollabParams.load(tmp_path / "c.nctb")
    np.testing.assert_array_equal(back.S, c.S)
    np.testing.assert_array_equal(back.I, c.I)
    assert back.K == c.K


def _roll(c, frames=6, seed=0):
    p = DecompParams()
    key = StreamKey(seed)
    first = sample_first_frame_shared(p, key, (1, 3, 3))
    return roll_sequence(first, p, c, frames, key)


def test_roll_uses_first_frame_draw_and_collaborates_after():
    c = random_params(np.random.default_rng(1), n=6, k=3)
    noise = _roll(c)
    hist = history_from_noise(noise)
    first = sample_first_frame_shared(DecompParams(), StreamKey(0), (1, 3, 3))
    np.testing.assert_array_equal(noise.shared["B"][:, 0], first["B"])
    n = 4
    expect = shared_next(hist[window_start(n, 3) - 1:n], c, n)
    np.testing.assert_allclose(noise.shared["B"][:, n], expect[0], atol=1e-12)


def test_zero_window_draws_fresh_shared_parts():
    noise = _roll(CollabParams.init(6, 0))
    assert not np.array_equal(noise.shared["B"][:, 1], noise.shared["B"][:, 2])


def test_first_frame_base_scales_frame_one():
    eps = np.random.default_rng(0).normal(size=(6, 1, 2, 2))
    out = first_frame_base_mode(eps, DecompParams(2.0, 1.0), 3)
    np.testing.assert_allclose(out["B"][:, 2], 0.8 * eps)
    np.testing.assert_allclose(out["F"][:, 0], 0.5 * eps)
