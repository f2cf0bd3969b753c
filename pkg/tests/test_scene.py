import numpy as np
import pytest

from noisectl.exceptions import ConfigError
from noisectl.scene import (SceneSpec, any_pool, avg_pool, build_dataset, conditioning, load_scene, parse_kv,
                            read_ppm, render, scene_from_blocks, scene_to_text, write_ppm)


@pytest.fixture(scope="module")
def dataset():
    return build_dataset(SceneSpec())


def test_default_dataset_dims(dataset):
    assert dataset.latents.shape == (6, 16, 1, 16, 28)
    assert dataset.masks.shape == (6, 16, 1, 16, 28)
    assert dataset.images.shape == (6, 16, 1, 32, 56)


def test_pooling_rules():
    np.testing.assert_array_equal(avg_pool(np.full((1, 4, 4), 0.3), 2), np.full((1, 2, 2), 0.3))
    np.testing.assert_array_equal(any_pool(np.array([[1.0, 0.0], [0.0, 0.0]]), 2), [[1.0]])


def test_pool_must_divide_view():
    with pytest.raises(ConfigError):
        build_dataset(SceneSpec(pool=3))


def test_views_tile_the_world():
    spec = SceneSpec()
    a, _ = render(spec, 1, 2)
    b, _ = render(spec, 1, 3)
    from noisectl.scene import render_world
    world, _ = render_world(spec, 1)
    np.testing.assert_array_equal(np.concatenate([a, b], axis=-1), world[:, :, 56:168])


def test_masks_mark_objects_as_foreground(dataset):
    # the first object starts at column 40, row 2 and spans 12x10 pixels
    assert dataset.masks.mask_b[0, 0, 0, 3, 22] == 0.0
    assert dataset.masks.mask_b[0, 0, 0, 14, 5] == 1.0


def test_conditioning_layout(dataset):
    cond = conditioning(dataset.spec, dataset.masks)
    assert cond.shape == (6, 16, 6, 16, 28)
    np.testing.assert_array_equal(cond[:, :, 0], dataset.masks.mask_f[:, :, 0])


def test_config_round_trip(tmp_path):
    spec = SceneSpec(n_frames=4, view_h=8, view_w=12, objects=())
    path = tmp_path / "s.cfg"
    path.write_text(scene_to_text(spec), encoding="utf-8")
    assert load_scene(path) == spec


@pytest.mark.parametrize("text", [
    "[scene]\nbogus = 1\n",
    "[object]\nsize = 2,2\n",
    "[scene]\nframes = 2\nframes = 3\n",
    "[scene]\nnot a pair\n",
])
def test_bad_configs_rejected(text):
    with pytest.raises(ConfigError):
        scene_from_blocks(parse_kv(text))


def test_ppm_round_trip(tmp_path):
    img = np.linspace(0, 1, 12).reshape(1, 3, 4)
    write_ppm(tmp_path / "a.ppm", img)
    raw = (tmp_path / "a.ppm").read_bytes()
    assert raw.startswith(b"P6\n4 3\n255\n")
    back = read_ppm(tmp_path / "a.ppm")
    np.testing.assert_allclose(back[0], img[0], atol=0.5 / 255 + 1e-12)
