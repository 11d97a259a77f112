import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evolba import fractal, spectral
from evolba.fractal import DegenerateFractal, IfsSystem, render, sample_system
from evolba.tensor import ImageLoadError, save_evb1, save_png


def test_sample_system_deterministic():
    a, b = sample_system(11, 4), sample_system(11, 4)
    assert np.array_equal(a.maps, b.maps)
    assert np.array_equal(a.probabilities, b.probabilities)
    assert not np.array_equal(a.maps, sample_system(12, 4).maps)


def test_two_maps_normalized():
    s = sample_system(0, 2)
    assert s.maps.shape == (2, 6)
    assert abs(s.probabilities.sum() - 1.0) <= 1e-12


@pytest.mark.parametrize("n", [1, 9])
def test_map_count_bounds(n):
    with pytest.raises(ValueError):
        sample_system(0, n)


def test_probability_ratio_follows_det():
    maps = np.array([[0.8, 0.0, 0.0, 1.0, 0.0, 0.0],   # det 0.8
                     [0.5, 0.3, 0.0, 0.4, 0.1, 0.2]])  # det 0.2
    dets = [abs(m[0] * m[3] - m[1] * m[2]) for m in maps]
    assert dets == pytest.approx([0.8, 0.2])
    p = IfsSystem.from_maps(maps).probabilities
    assert p[0] / p[1] == pytest.approx(4.0, rel=1e-4)


def test_invalid_probabilities_rejected():
    with pytest.raises(ValueError):
        IfsSystem(np.zeros((2, 6)), np.array([0.7, 0.7]))


def test_fixed_point_system_is_degenerate():
    # both maps send everything to (0.3, 0.3)
    maps = np.array([[0, 0, 0, 0, 0.3, 0.3], [0, 0, 0, 0, 0.3, 0.3]], dtype=float)
    with pytest.raises(DegenerateFractal):
        render(IfsSystem.from_maps(maps), 32, 32, 10_000)


def test_diverging_system_is_degenerate():
    maps = np.array([[3, 0, 0, 3, 1, 1], [2.5, 0, 0, 2.5, 0, 1]], dtype=float)
    with pytest.raises(DegenerateFractal):
        render(IfsSystem.from_maps(maps), 32, 32, 10_000)


def test_render_needs_enough_points():
    with pytest.raises(ValueError):
        render(sample_system(0, 3), 16, 16, 9_999)


def test_sierpinski_is_binary_with_partial_fill():
    maps = np.array([[0.5, 0, 0, 0.5, 0, 0], [0.5, 0, 0, 0.5, 0.5, 0], [0.5, 0, 0, 0.5, 0, 0.5]])
    img = render(IfsSystem.from_maps(maps), 64, 64, 50_000)
    assert set(np.unique(img)) <= {0.0, 1.0}
    assert np.array_equal(img[:, :, 0], img[:, :, 2])
    filled = sum(1 for v in img[:, :, 0].ravel() if v == 1.0)
    assert 0 < filled < 64 * 64
    assert fractal.fill_ratio(img) == filled / 4096
    # a Sierpinski triangle leaves the upper-right half of its box mostly empty
    assert fractal.fill_ratio(img) < 0.5


def test_render_deterministic():
    s = sample_system(5, 3)
    try:
        a = render(s, 24, 24, 10_000, seed=3)
    except DegenerateFractal:
        pytest.skip("sampled system degenerate")
    assert np.array_equal(a, render(s, 24, 24, 10_000, seed=3))


def test_generate_accepts_filter():
    img, system = fractal.generate(7, 128, 128)
    assert img.shape == (128, 128, 3)
    assert 0.05 <= fractal.fill_ratio(img) <= 0.95
    for r in (25, 50):
        assert spectral.highpass_energy_ratio(img, r) > 0
    again, _ = fractal.generate(7, 128, 128)
    assert np.array_equal(img, again)


def test_acceptable_rejects_blank_and_full():
    assert not fractal.acceptable(np.zeros((32, 32, 3)))
    assert not fractal.acceptable(np.ones((32, 32, 3)))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8))
def test_sampled_systems_are_valid(seed, n):
    s = sample_system(seed, n)
    assert len(s.maps) == n
    assert np.all(np.abs(s.maps) <= 1.0)
    assert np.all(s.probabilities > 0)
    assert abs(s.probabilities.sum() - 1.0) <= 1e-12


def test_load_roundtrip_evb1(tmp_path):
    img, _ = fractal.generate(2, 32, 32, n_points=20_000)
    save_evb1(tmp_path / "f.evb1", img)
    assert np.array_equal(fractal.load_fractal(tmp_path / "f.evb1", 32, 32), img)
    with pytest.raises(ImageLoadError):
        fractal.load_fractal(tmp_path / "f.evb1", 16, 16)


def test_load_png_quantization(tmp_path):
    levels = np.arange(0, 256, 5, dtype=float)[:48]
    img = np.resize(levels / 255.0, (4, 4, 3))
    save_png(tmp_path / "f.png", img)
    loaded = fractal.load_fractal(tmp_path / "f.png", 4, 4)
    assert np.max(np.abs(loaded - img)) <= 1 / 510


def test_load_missing_file(tmp_path):
    with pytest.raises(ImageLoadError):
        fractal.load_fractal(tmp_path / "nope.png", 4, 4)
