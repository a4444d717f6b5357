import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from bmlinpaint import augment
from bmlinpaint.phantom import PhantomConfig, gen_healthy, LesionSpec, inject_lesion

images = arrays(np.float64, st.tuples(st.integers(1, 16), st.integers(1, 16)), elements=st.floats(0, 1))


def test_horizontal_flip_small_case():
    (out,) = augment.flip(np.array([[1.0, 2.0], [3.0, 4.0]]), axis="horizontal")
    assert np.array_equal(out, [[2.0, 1.0], [4.0, 3.0]])


@given(images, st.sampled_from(["horizontal", "vertical"]))
def test_flip_is_involution(img, axis):
    (once,) = augment.flip(img, axis=axis)
    (twice,) = augment.flip(once, axis=axis)
    assert np.array_equal(twice, img)


def test_flip_keeps_lesion_inside_bone():
    cfg = PhantomConfig(size=64)
    s = gen_healthy(cfg, 3)
    r, c = np.argwhere(s.marrow_mask)[len(np.argwhere(s.marrow_mask)) // 2]
    s = inject_lesion(s, LesionSpec(20, (r, c), 0.3, 1.0, 0.0), 0)
    for axis in ("horizontal", "vertical"):
        img, bone, lesion = augment.flip(s.image, s.bone_mask, s.lesion_mask, axis=axis)
        assert not np.any(lesion & ~bone)
        assert lesion.sum() == s.lesion_mask.sum()


def test_bad_axis():
    with pytest.raises(ValueError):
        augment.flip(np.zeros((2, 2)), axis="diagonal")


def test_monomial_order():
    assert augment.monomials(1) == [(0, 0), (1, 0), (0, 1)]
    assert len(augment.monomials(3)) == 10


def test_zero_bound_is_identity():
    img = np.random.default_rng(0).random((9, 7))
    out = augment.bias_field(img, augment.BiasFieldParams(order=3, bound=0.0, seed=5))
    assert np.array_equal(out, img)


def test_linear_field_closed_form():
    c = 0.4
    img = np.full((5, 9), 0.5)
    out = augment.bias_field_from_coeffs(img, [0.0, c, 0.0], order=1)
    u = np.linspace(-1, 1, 9)
    expected = np.clip(0.5 * np.exp(c * u), 0, 1)
    for row in out:
        np.testing.assert_allclose(row, expected, rtol=1e-14)


def test_field_is_positive_for_many_seeds():
    for seed in range(1000):
        coeffs = augment.random_bias_coeffs(augment.BiasFieldParams(3, 2.0, seed))
        field = np.exp(augment.polynomial_field((8, 8), coeffs, 3))
        assert field.min() > 0


def test_bias_field_is_deterministic_and_bounded():
    img = np.random.default_rng(1).random((16, 16))
    p = augment.BiasFieldParams(3, 0.5, 42)
    a, b = augment.bias_field(img, p), augment.bias_field(img, p)
    assert np.array_equal(a, b)
    assert a.min() >= 0 and a.max() <= 1
    assert not np.array_equal(a, augment.bias_field(img, augment.BiasFieldParams(3, 0.5, 43)))


# --- histogram equalization -------------------------------------------------

def test_he_constant_image():
    out = augment.hist_equalize(np.full((4, 4), 0.3))
    assert len(np.unique(out)) == 1


def test_he_single_occupied_bin_maps_to_one_value():
    img = np.array([[0.00195312, 0.0]])
    assert augment.hist_equalize(img).tolist() == [[0.0, 0.0]]
    const = np.full((3, 3), 0.3)
    assert np.array_equal(augment.hist_equalize(const), const)


def test_he_uniform_histogram_is_near_identity():
    levels = np.repeat(np.arange(256) / 255.0, 3).reshape(24, 32)
    out = augment.hist_equalize(levels)
    # bin k maps to k / 255 exactly, which is where the input already sits
    assert np.max(np.abs(out - levels)) <= 1 / 255


def test_he_two_levels():
    img = np.array([0.2] * 25 + [0.7] * 75).reshape(10, 10)
    out = augment.hist_equalize(img)
    assert set(np.unique(out)) == {0.0, 1.0}
    assert np.all(out[img == 0.2] == 0.0)


@settings(max_examples=60, deadline=None)
@given(images)
def test_he_is_monotone_and_bounded(img):
    out = augment.hist_equalize(img)
    assert out.min() >= 0 and out.max() <= 1
    bins = augment.quantize_bins(img).ravel()
    order = np.argsort(bins, kind="stable")
    assert np.all(np.diff(out.ravel()[order]) >= 0)


@settings(max_examples=60, deadline=None)
@given(images)
def test_he_idempotent_within_one_bin(img):
    once = augment.hist_equalize(img)
    twice = augment.hist_equalize(once)
    assert np.max(np.abs(twice - once)) <= 1 / 255 + 1e-12
