import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from noisectl.collab import CollabParams
from noisectl.decompose import MaskVolume
from noisectl.estimators import JointDenoiser, NoiseController
from noisectl.exceptions import ParameterError, ShapeError, ValidationError
from noisectl.scene import SceneSpec, build_dataset


@pytest.fixture(scope="module")
def tiny():
    return build_dataset(SceneSpec(n_frames=3, view_h=8, view_w=12, objects=()))


def test_get_params_and_clone():
    ctl = NoiseController(eta=2.0, window_k=3)
    assert ctl.get_params()["eta"] == 2.0
    assert clone(ctl).get_params() == ctl.get_params()
    assert clone(JointDenoiser(T=7)).T == 7


def test_unfitted_use_raises():
    with pytest.raises(NotFittedError):
        NoiseController().prior()
    with pytest.raises(NotFittedError):
        JointDenoiser().predict(np.zeros((6, 1, 1, 2, 2)), 1)


@pytest.mark.parametrize("kw", [dict(mode="x"), dict(window_k=-1), dict(window_k=20), dict(n_frames=0),
                                dict(learning_rate=0.0)])
def test_bad_parameters(kw):
    with pytest.raises(ParameterError):
        NoiseController(**kw).fit()


def test_fit_skips_when_nothing_to_learn():
    ctl = NoiseController(window_k=0, n_frames=4).fit()
    assert ctl.loss_trace_ == [] and ctl.collab_.K == 0
    ctl = NoiseController(mode="nocollab", n_frames=4, window_k=2).fit()
    assert ctl.loss_trace_ == []


def test_short_fit_records_a_trace():
    ctl = NoiseController(n_frames=3, window_k=2, n_steps=3, batch_size=2, grid=(2, 2)).fit()
    assert [row[0] for row in ctl.loss_trace_] == [0, 1, 2, 3]


def test_transform_shape_checks(tiny):
    ctl = NoiseController(n_frames=3, window_k=2, n_steps=0).fit()
    assert ctl.transform(tiny.masks).shape == tiny.masks.shape
    with pytest.raises(ShapeError):
        ctl.transform(np.ones((6, 2, 1, 4, 6)))
    with pytest.raises(ShapeError):
        ctl.transform(np.ones((6, 3, 4, 6)))


def test_set_collab_checks_dimensions():
    ctl = NoiseController(n_frames=3, window_k=2)
    with pytest.raises(ParameterError):
        ctl.set_collab(CollabParams.init(3, 1))
    assert ctl.set_collab(CollabParams.init(3, 2)).collab_.K == 2


def test_denoiser_fit_and_generate(tiny):
    ctl = NoiseController(n_frames=3, window_k=2, n_steps=0).fit()
    jd = JointDenoiser(T=4, hidden=4, n_steps=2, eval_every=1).fit(tiny, noise=ctl)
    assert [row[0] for row in jd.loss_trace_] == [0, 1, 2]
    video = jd.generate(ctl)
    assert video.shape == tiny.latents.shape and np.all(np.isfinite(video))
    np.testing.assert_array_equal(video, jd.generate(ctl))
    assert jd.predict(tiny.latents, 2).shape == tiny.latents.shape


def test_denoiser_rejects_raw_arrays(tiny):
    with pytest.raises(ValidationError):
        JointDenoiser().fit(tiny.latents)
    assert isinstance(tiny.masks, MaskVolume)
