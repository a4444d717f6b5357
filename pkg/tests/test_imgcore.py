import json
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from bmlinpaint import imgcore


def flood_fill_components(mask, connectivity):
    """Reference labelling: BFS from each unvisited pixel in raster order."""
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=int)
    if connectivity == 4:
        steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        steps = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]
    areas = []
    for i in range(h):
        for j in range(w):
            if mask[i, j] and not labels[i, j]:
                lab = len(areas) + 1
                labels[i, j] = lab
                queue, area = deque([(i, j)]), 0
                while queue:
                    a, b = queue.popleft()
                    area += 1
                    for di, dj in steps:
                        y, x = a + di, b + dj
                        if 0 <= y < h and 0 <= x < w and mask[y, x] and not labels[y, x]:
                            labels[y, x] = lab
                            queue.append((y, x))
                areas.append(area)
    return labels, areas


# --- file I/O ---------------------------------------------------------------

@pytest.mark.parametrize("suffix", [".png", ".pgm"])
def test_8bit_full_scale_and_zero(tmp_path, suffix):
    img = np.array([[0.0, 1.0]])
    path = tmp_path / f"a{suffix}"
    imgcore.save_image(img, path, depth=8)
    back = imgcore.load_image(path)
    assert back[0, 0] == 0.0 and back[0, 1] == 1.0


def test_16bit_png_code_32768(tmp_path):
    path = tmp_path / "a.png"
    Image.fromarray(np.array([[32768]], dtype=np.uint16)).save(path)
    assert imgcore.load_image(path)[0, 0] == pytest.approx(32768 / 65535)


def test_16bit_pgm_is_big_endian(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P5\n# comment\n1 1\n65535\n" + (32768).to_bytes(2, "big"))
    assert imgcore.load_image(path)[0, 0] == 32768 / 65535


def test_constant_half_quantizes_to_128(tmp_path):
    path = tmp_path / "half.pgm"
    imgcore.save_image(np.full((3, 4), 0.5), path, depth=8)
    codes = np.frombuffer(path.read_bytes()[-12:], dtype=np.uint8)
    assert np.all(codes == 128)


def test_empty_path_rejected():
    with pytest.raises(ValueError):
        imgcore.save_image(np.zeros((2, 2)), "", depth=8)


def test_rgb_png_rejected(tmp_path):
    path = tmp_path / "rgb.png"
    Image.fromarray(np.zeros((2, 2, 3), dtype=np.uint8)).save(path)
    with pytest.raises(ValueError):
        imgcore.load_image(path)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 9), st.integers(1, 9)),
              elements=st.floats(0, 1)), st.sampled_from([".png", ".pgm"]))
def test_16bit_round_trip_within_one_code(tmp_path_factory, img, suffix):
    path = tmp_path_factory.mktemp("rt") / f"img{suffix}"
    imgcore.save_image(img, path, depth=16)
    back = imgcore.load_image(path)
    assert back.shape == img.shape
    assert np.max(np.abs(back - img)) <= 1 / 65535


def test_mask_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    m = rng.random((7, 5)) > 0.5
    imgcore.save_mask(m, tmp_path / "m.png")
    assert np.array_equal(imgcore.load_mask(tmp_path / "m.png"), m)


# --- volumes ----------------------------------------------------------------

def test_volume_round_trip_is_bit_exact(tmp_path):
    vol = np.random.default_rng(1).standard_normal((3, 4, 4)).astype(np.float32)
    imgcore.save_volume(vol, tmp_path / "v.raw")
    header = json.loads((tmp_path / "v.json").read_text())
    assert header == {"width": 4, "height": 4, "slices": 3, "dtype": "f32le"}
    back = imgcore.load_volume(tmp_path / "v.raw")
    assert back.tobytes() == vol.tobytes()


def test_volume_payload_mismatch(tmp_path):
    (tmp_path / "v.json").write_text(json.dumps({"width": 4, "height": 4, "slices": 3, "dtype": "f32le"}))
    (tmp_path / "v.raw").write_bytes(np.zeros(47, dtype="<f4").tobytes())
    with pytest.raises(ValueError):
        imgcore.load_volume(tmp_path / "v.raw")


def test_volume_slice_matches_image(tmp_path):
    vol = np.random.default_rng(2).random((3, 5, 6)).astype(np.float32)
    imgcore.save_volume(vol, tmp_path / "v.raw")
    back = imgcore.load_volume(tmp_path / "v.raw")
    assert np.array_equal(imgcore.volume_slice(back, 1), vol[1].astype(np.float64))


# --- resampling -------------------------------------------------------------

def test_resize_same_size_is_identity():
    img = np.random.default_rng(3).random((6, 9))
    assert np.array_equal(imgcore.resize_bilinear(img, 9, 6), img)


def test_resize_two_to_four():
    out = imgcore.resize_bilinear(np.array([[0.0, 1.0]]), 4, 1)
    np.testing.assert_allclose(out, [[0.0, 0.25, 0.75, 1.0]], atol=1e-15)


def test_resize_zero_dimension():
    with pytest.raises(ValueError):
        imgcore.resize_bilinear(np.zeros((2, 2)), 0, 3)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.integers(1, 40), st.integers(1, 40), st.integers(1, 12), st.integers(1, 12))
def test_resize_preserves_constants(c, nw, nh, w, h):
    out = imgcore.resize_bilinear(np.full((h, w), c), nw, nh)
    assert out.shape == (nh, nw)
    assert np.all(out == c)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 10), st.integers(1, 10)), elements=st.floats(0, 1)),
       st.integers(1, 25), st.integers(1, 25))
def test_resize_stays_in_input_range(img, nw, nh):
    out = imgcore.resize_bilinear(img, nw, nh)
    assert out.min() >= img.min() and out.max() <= img.max()


# --- connected components ---------------------------------------------------

def test_empty_mask_has_no_components():
    assert len(imgcore.connected_components(np.zeros((5, 5), bool))) == 0


def test_diagonal_pixels_and_connectivity():
    m = np.array([[1, 0], [0, 1]], bool)
    assert len(imgcore.connected_components(m, 4)) == 2
    assert len(imgcore.connected_components(m, 8)) == 1


@pytest.mark.parametrize("connectivity", [4, 8])
def test_components_match_flood_fill(connectivity):
    rng = np.random.default_rng(4)
    for _ in range(100):
        m = rng.random((rng.integers(1, 20), rng.integers(1, 20))) < rng.uniform(0.2, 0.7)
        got = imgcore.connected_components(m, connectivity)
        labels, areas = flood_fill_components(m, connectivity)
        assert got.areas == areas
        assert np.array_equal(got.labels, labels)
        assert sum(got.areas) == m.sum()
        for c in got.components:
            r0, c0, r1, c1 = c.bbox
            rr, cc = np.nonzero(got.labels == c.id)
            assert (rr.min(), cc.min(), rr.max() + 1, cc.max() + 1) == (r0, c0, r1, c1)


@settings(max_examples=30, deadline=None)
@given(arrays(bool, (8, 8)), st.integers(0, 4), st.integers(0, 4))
def test_component_areas_invariant_under_translation(m, dy, dx):
    big = np.zeros((12, 12), bool)
    big[dy : dy + 8, dx : dx + 8] = m
    a = sorted(imgcore.connected_components(m, 8).areas)
    b = sorted(imgcore.connected_components(big, 8).areas)
    assert a == b
