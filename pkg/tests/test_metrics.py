import numpy as np
import pytest

from noisectl.collab import CollabParams
from noisectl.decompose import DecompParams, MaskVolume
from noisectl.exceptions import ParameterError
from noisectl.metrics import (ConsistencyReport, ablation_table, crossview_consistency, moment_check,
                              moment_suite, temporal_consistency)
from noisectl.prior import NoisePrior
from noisectl.scene import SceneSpec, build_dataset


@pytest.fixture(scope="module")
def data():
    return build_dataset(SceneSpec())


def test_ground_truth_video_is_consistent(data):
    assert temporal_consistency(data.latents, data.spec) <= 1e-6
    assert crossview_consistency(data.latents, data.spec, data.latents) <= 1e-6


def test_white_noise_scores_twice_the_variance(data):
    noise = np.random.default_rng(0).normal(size=data.latents.shape)
    assert temporal_consistency(noise, data.spec) == pytest.approx(2.0, rel=0.05)
    assert crossview_consistency(noise, data.spec, data.latents) > 1.0


def test_frozen_static_scene_scores_zero():
    spec = SceneSpec(objects=())
    static = build_dataset(spec).latents
    assert temporal_consistency(static, spec) == 0.0


def test_duplicated_view_breaks_the_seams(data):
    dup = np.repeat(data.latents[:1], 6, axis=0)
    assert crossview_consistency(dup, data.spec, data.latents) > 0.0


def _draw(eta=1.0, hw=96, frames=2):
    rng = np.random.default_rng(1)
    masks = MaskVolume((rng.random((6, frames, 1, hw, hw)) < 0.5).astype(float))
    prior = NoisePrior(DecompParams(eta, 1.0), CollabParams.init(frames, 1), seed=2)
    return prior.draw(masks, 0, channels=2), masks


def test_moment_suite_passes_on_prescribed_noise():
    draw, masks = _draw()
    assert all(r.passed for r in moment_suite(draw.noise, DecompParams(), masks))


def test_shared_variance_at_eta_two():
    draw, _ = _draw(eta=2.0)
    res = moment_check(draw.noise.shared["B"][:, 0], "shared", 0.8)
    assert all(r.passed for r in res)


def test_mis_scaled_noise_fails_the_variance_test():
    x = np.random.default_rng(3).normal(size=200_000) * np.sqrt(1.2)
    verdicts = {r.statistic: r.passed for r in moment_check(x, "x", 1.0)}
    assert not verdicts["variance"]


def test_verdicts_are_monotone_in_the_bound_multiplier():
    x = np.random.default_rng(4).normal(size=100_000) * 1.01
    loose = [r.passed for r in moment_check(x, "x", 1.0, k=12.0)]
    tight = [r.passed for r in moment_check(x, "x", 1.0, k=1.0)]
    assert all(lo or not ti for lo, ti in zip(loose, tight))


def test_moment_checks_need_enough_samples():
    with pytest.raises(ParameterError):
        moment_check(np.zeros(10), "x", 1.0)


def test_ablation_table_rows():
    a = ConsistencyReport(0.1, 0.2, label="full")
    csv_text, md = ablation_table([("full", a), ("nocollab", a)])
    lines = csv_text.strip().splitlines()
    assert len(lines) == 3 and lines[1].split(",")[1:] == lines[2].split(",")[1:]
    assert md.count("\n") == 4
    with pytest.raises(ParameterError):
        ablation_table([])


def test_negative_scores_rejected():
    with pytest.raises(ParameterError):
        ConsistencyReport(-1.0, 0.0)
