import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisectl.collab import CollabParams
from noisectl.decompose import DecompParams
from noisectl.exceptions import ParameterError, StateError
from noisectl.losses import (coefficient_loss, direct_frame_loss, grad_check, rolled_coefficient_loss,
                             scene_noise_loss, total_loss)
from noisectl.tensor import StreamKey
from noisectl.train import fixed_draws, rolled_histories


def _histories(seed=0, n=16):
    p = DecompParams()
    first, res = fixed_draws(p, n, StreamKey(seed), (2, 1, 3, 3))
    return p, first, res


def test_zero_s_gives_the_full_target_mass():
    p, first, res = _histories()
    c = CollabParams(np.zeros((16, 2, 6, 6)), CollabParams.init(16, 5).I, 5)
    total, (lb, lf) = coefficient_loss(c, p, rolled_histories(first, res, p, c))
    # 6 views x 16 frames x 1/2
    assert lb == 48.0 and lf == 48.0 and total == 96.0


def test_rolled_and_fixed_history_losses_agree():
    p, first, res = _histories(1)
    c = CollabParams.init(16, 5)
    a = coefficient_loss(c, p, rolled_histories(first, res, p, c))[0]
    b = rolled_coefficient_loss(c, p, first, res)[0]
    assert a == pytest.approx(b, rel=1e-12)


def test_empty_batch_rejected():
    with pytest.raises(StateError):
        coefficient_loss(CollabParams.init(2, 1), DecompParams(), np.zeros((0, 2, 2, 6, 1)))


def _perturbed(seed, n=16, k=5):
    rng = np.random.default_rng(seed)
    c = CollabParams.init(n, k)
    return c.with_flat(c.flat() + 0.1 * rng.normal(size=c.flat().size))


@pytest.mark.parametrize("seed", [0, 1])
def test_coefficient_gradient_matches_finite_differences(seed):
    p, first, res = _histories(seed)
    c = _perturbed(seed)
    hist = rolled_histories(first, res, p, c)
    f = lambda x: coefficient_loss(c.with_flat(x), p, hist)[0]
    g = lambda x: coefficient_loss(c.with_flat(x), p, hist, return_grad=True)[2].flat()
    assert grad_check(f, g, c.flat(), 30, seed=seed) <= 1e-4


def test_rolled_gradient_matches_finite_differences():
    p, first, res = _histories(3)
    c = _perturbed(3)
    f = lambda x: rolled_coefficient_loss(c.with_flat(x), p, first, res)[0]
    g = lambda x: rolled_coefficient_loss(c.with_flat(x), p, first, res, return_grad=True)[2].flat()
    assert grad_check(f, g, c.flat(), 30) <= 1e-4


def test_grad_check_is_tight_on_a_quadratic():
    a = np.diag(np.arange(1.0, 6.0))
    f = lambda x: float(x @ a @ x)
    g = lambda x: 2 * a @ x
    assert grad_check(f, g, np.linspace(-1, 1, 5), 5) <= 1e-8


def _scene(seed, frames=4):
    rng = np.random.default_rng(seed)
    mask = (rng.random((6, frames, 1, 3, 3)) < 0.5).astype(float)
    gt = rng.normal(size=(6, frames, 1, 3, 3)) * mask
    pred = rng.normal(size=gt.shape) * mask
    return mask, gt, pred


def test_scene_loss_first_frame_and_zero_s():
    mask, gt, pred = _scene(0)
    c = CollabParams.init(4, 2)
    assert scene_noise_loss(mask, gt, gt, c, 1) == 0.0
    zero = CollabParams(np.zeros_like(c.S), c.I, c.K)
    assert scene_noise_loss(mask, gt, pred, zero, 2) == pytest.approx(np.linalg.norm(mask[:, 1] * gt[:, 1]))
    with pytest.raises(ParameterError):
        scene_noise_loss(mask, gt, pred, c, 0)
    with pytest.raises(StateError):
        scene_noise_loss(mask, gt, pred, c, 5)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.sampled_from(["B", "F"]))
def test_losses_are_nonnegative(seed, n, channel):
    mask, gt, pred = _scene(seed)
    c = _perturbed(seed, n=4, k=2)
    assert scene_noise_loss(mask, gt, pred, c, n, channel) >= 0
    assert direct_frame_loss(mask, gt, pred, n) >= 0


@pytest.mark.parametrize("n", [1, 3])
def test_scene_loss_gradient(n):
    mask, gt, pred = _scene(5)
    c = _perturbed(5, n=4, k=2)
    f = lambda x: scene_noise_loss(mask, gt, x.reshape(pred.shape), c, n)
    g = lambda x: scene_noise_loss(mask, gt, x.reshape(pred.shape), c, n, return_grad=True)[1].ravel()
    assert grad_check(f, g, pred.ravel(), 40) <= 1e-4


def test_total_loss_is_a_plain_sum():
    assert total_loss(0.0, [0.0], [0.0]) == 0.0
    assert total_loss(1.0, [2.0, 3.0], [4.0]) == 10.0
    assert total_loss(1.5, [2.0], [4.0]) > total_loss(1.0, [2.0], [4.0])
