import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as npst

from voldedup.core import Volume
from voldedup.embedder import (
    ToyEmbedderConfig,
    embed_volume,
    minmax_scale,
    pool_slice,
    resize2d,
    resize_slice,
)


class TestResize:
    def test_corner_aligned_upsample_hits_thirds(self):
        # 2x2 -> 4x4: sample coords are 0, 1/3, 2/3, 1 along each axis
        a = np.array([[0.0, 1.0], [2.0, 3.0]])
        out = resize2d(a, 4, 4)
        assert out[0, 0] == 0.0 and out[3, 3] == 3.0
        assert out[0, 1] == pytest.approx(1.0 / 3.0)
        assert out[1, 0] == pytest.approx(2.0 / 3.0)
        assert out[2, 3] == pytest.approx(1.0 + 4.0 / 3.0)

    def test_identity_when_shape_matches(self, rng):
        a = rng.standard_normal((7, 5))
        out = resize2d(a, 7, 5)
        np.testing.assert_array_equal(out, a)
        assert out is not a  # defensive copy

    def test_single_output_sample_takes_corner(self):
        a = np.array([[4.0, 9.0], [1.0, 6.0]])
        assert resize2d(a, 1, 1)[0, 0] == 4.0

    def test_downsample_stays_within_input_range(self, rng):
        a = rng.uniform(-3.0, 5.0, size=(33, 21))
        out = resize2d(a, 8, 8)
        assert out.min() >= a.min() - 1e-12
        assert out.max() <= a.max() + 1e-12

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            resize2d(np.zeros(4), 2, 2)
        with pytest.raises(ValueError):
            resize2d(np.zeros((2, 2)), 0, 2)


class TestPool:
    def test_divisible_side_is_block_mean(self):
        a = np.arange(16, dtype=float).reshape(4, 4)
        out = pool_slice(a, 2)
        expected = np.array(
            [
                [a[:2, :2].mean(), a[:2, 2:].mean()],
                [a[2:, :2].mean(), a[2:, 2:].mean()],
            ]
        )
        np.testing.assert_array_equal(out, expected)

    def test_non_divisible_side_falls_back_to_resize(self, rng):
        a = rng.standard_normal((7, 7))
        np.testing.assert_array_equal(pool_slice(a, 3), resize_slice(a, 3))

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            pool_slice(np.zeros((4, 6)), 2)


class TestMinmax:
    def test_maps_to_unit_interval(self, rng):
        v = Volume("c", rng.uniform(-100.0, 250.0, size=(3, 5, 5)))
        scaled = minmax_scale(v)
        assert scaled.voxels.min() == 0.0
        assert scaled.voxels.max() == 1.0
        assert scaled.case_id == "c"

    def test_constant_volume_becomes_zeros(self):
        v = Volume("flat", np.full((2, 3, 3), 7.0))
        np.testing.assert_array_equal(minmax_scale(v).voxels, 0.0)

    def test_keeps_transform_tag(self):
        v = Volume("c", np.zeros((1, 2, 2)) + np.arange(2), transform_tag="crop:0.1")
        assert minmax_scale(v).transform_tag == "crop:0.1"


def test_config_validation():
    assert ToyEmbedderConfig().dim == 256
    with pytest.raises(ValueError):
        ToyEmbedderConfig(target_side=0)
    with pytest.raises(ValueError):
        ToyEmbedderConfig(target_side=32, preprocess_side=16)


def test_embed_volume_basic_shape(rng):
    v = Volume("c", rng.uniform(0.0, 1.0, size=(5, 30, 40)))
    es = embed_volume(v)
    assert es.case_id == "c"
    assert es.dim == 256
    assert es.slice_count == 5
    assert all(vec.dtype == np.float32 for vec in es.vectors)


def test_embed_volume_deterministic(rng):
    vox = rng.uniform(0.0, 1.0, size=(4, 17, 23))
    a = embed_volume(Volume("c", vox))
    b = embed_volume(Volume("c", vox.copy()))
    assert a == b


def test_constant_volume_embeds_to_zeros():
    es = embed_volume(Volume("flat", np.full((3, 8, 8), 42.0)))
    np.testing.assert_array_equal(es.matrix(), 0.0)


def test_embedding_reacts_to_translation(rng):
    base = rng.uniform(0.0, 1.0, size=(1, 48, 48))
    shifted = np.roll(base, 5, axis=2)
    a = embed_volume(Volume("a", base)).matrix()
    b = embed_volume(Volume("b", shifted)).matrix()
    assert np.abs(a - b).max() > 1e-3


@settings(max_examples=30, deadline=None)
@given(
    base=npst.arrays(
        np.float64,
        (24, 24),
        elements=st.floats(0.0, 1.0, allow_nan=False, width=32),
    ),
    eps=st.floats(1e-6, 0.05),
    seed=st.integers(0, 2**16),
)
def test_embedding_perturbation_is_bounded(base, eps, seed):
    """Resize and pooling are convex averages: an L-inf perturbation of the
    scaled slice cannot grow through the embedding."""
    cfg = ToyEmbedderConfig(target_side=4, preprocess_side=36)
    rng = np.random.default_rng(seed)
    noisy = base + rng.uniform(-eps, eps, size=base.shape)
    a = pool_slice(resize_slice(base, cfg.preprocess_side), cfg.target_side)
    b = pool_slice(resize_slice(noisy, cfg.preprocess_side), cfg.target_side)
    assert np.abs(a - b).max() <= np.abs(base - noisy).max() + 1e-9
