import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from evolba.tensor import (ImageLoadError, as_image, blend, clamp01, l2_distance, load_image, save_evb1,
                           save_png)

from conftest import random_image


def test_l2_identity_and_analytic():
    x = np.full((2, 2, 3), 0.3)
    assert l2_distance(x, x) == 0.0
    assert l2_distance(np.zeros((2, 2, 3)), np.ones((2, 2, 3))) == pytest.approx(math.sqrt(12), abs=1e-12)


def test_l2_matches_elementwise_loop(rng):
    a, b = random_image(rng), random_image(rng)
    total = 0.0
    for i in range(8):
        for j in range(8):
            for c in range(3):
                total += (a[i, j, c] - b[i, j, c]) ** 2
    assert l2_distance(a, b) == pytest.approx(math.sqrt(total), rel=1e-12)


def test_l2_dimension_mismatch():
    with pytest.raises(ValueError):
        l2_distance(np.zeros((2, 2, 3)), np.zeros((3, 2, 3)))


def test_blend_endpoints_and_midpoint(rng):
    x, xp = random_image(rng), random_image(rng)
    assert np.array_equal(blend(x, xp, 0.0), x)
    assert np.array_equal(blend(x, xp, 1.0), xp)
    np.testing.assert_allclose(blend(np.zeros((4, 4, 3)), np.ones((4, 4, 3)), 0.25), 0.25)


@pytest.mark.parametrize("alpha", [-0.1, 1.5])
def test_blend_rejects_alpha(alpha):
    with pytest.raises(ValueError):
        blend(np.zeros((2, 2, 3)), np.ones((2, 2, 3)), alpha)


def test_clamp01_definition():
    v = np.full(12, 0.5)
    v[:3] = [-0.5, 0.3, 1.7]
    out = clamp01(v, (2, 2, 3))
    assert out.shape == (2, 2, 3)
    assert out.reshape(-1)[:3].tolist() == [0.0, 0.3, 1.0]
    inside = np.linspace(0, 1, 12)
    assert np.array_equal(clamp01(inside, (2, 2, 3)).reshape(-1), inside)
    with pytest.raises(ValueError):
        clamp01(np.zeros(11), (2, 2, 3))


def test_clamp01_clip_count_matches_scan(rng):
    v = rng.normal(0.5, 0.6, size=3 * 16 * 16)
    out = clamp01(v, (16, 16, 3)).reshape(-1)
    expected = sum(1 for value in v if value < 0 or value > 1)
    assert np.count_nonzero(out != v) == expected


images = arrays(np.float64, (3, 3, 3), elements=st.floats(0, 1))
vectors = arrays(np.float64, 27, elements=st.floats(-3, 3))


@given(images, images)
def test_l2_symmetric(a, b):
    assert l2_distance(a, b) == l2_distance(b, a)
    assert l2_distance(a, a) == 0.0


@given(images, images, st.lists(st.floats(0, 1), min_size=2, max_size=6))
def test_blend_monotone_distance(x, xp, alphas):
    dists = [l2_distance(blend(x, xp, a), x) for a in sorted(alphas)]
    assert all(d2 >= d1 - 1e-12 for d1, d2 in zip(dists, dists[1:]))


@given(vectors)
def test_clamp_idempotent(v):
    once = clamp01(v, (3, 3, 3))
    assert np.array_equal(clamp01(once, (3, 3, 3)), once)


def test_as_image_validates():
    with pytest.raises(ValueError):
        as_image(np.zeros(10), 2, 2)
    with pytest.raises(ValueError):
        as_image(np.full(12, 1.5), 2, 2)


def test_evb1_roundtrip(tmp_path, rng):
    x = random_image(rng, 5, 7).astype(np.float32).astype(np.float64)
    path = tmp_path / "x.evb1"
    save_evb1(path, x)
    raw = path.read_bytes()
    assert raw[:4] == b"EVB1" and len(raw) == 12 + 4 * 3 * 5 * 7
    assert np.array_equal(load_image(path, size=(5, 7)), x)


def test_png_quantization(tmp_path, rng):
    x = random_image(rng, 6, 4)
    path = tmp_path / "x.png"
    save_png(path, x)
    loaded = load_image(path)
    assert np.max(np.abs(loaded - x)) <= 1 / 510 + 1e-12


def test_load_errors(tmp_path, rng):
    path = tmp_path / "x.evb1"
    save_evb1(path, random_image(rng, 4, 4))
    with pytest.raises(ImageLoadError):
        load_image(path, size=(8, 8))
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not an image")
    with pytest.raises(ImageLoadError):
        load_image(bad)
