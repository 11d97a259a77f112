"""Centered 2D DFT, circular band masks and the fractal mixing operators.

Spectra are complex arrays of shape ``(height, width, 3)`` with the zero
frequency moved to ``(height // 2, width // 2)``. The forward transform is
unnormalized and the inverse carries the ``1 / (w h)`` factor, so a constant
image ``c`` has a single centered coefficient ``c * w * h`` per channel.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .tensor import check_image


class InitFailed(RuntimeError):
    """No cutoff down to zero produced an adversarial candidate."""


def dft2(x: np.ndarray) -> np.ndarray:
    x = check_image(x)
    return np.fft.fftshift(np.fft.fft2(x, axes=(0, 1)), axes=(0, 1))


def idft2(f: np.ndarray, clamp: bool = True) -> np.ndarray:
    """Inverse of :func:`dft2`; the imaginary residue is dropped."""
    x = np.fft.ifft2(np.fft.ifftshift(f, axes=(0, 1)), axes=(0, 1)).real
    if clamp:
        x = np.clip(x, 0.0, 1.0)
    return x


def max_radius(width: int, height: int) -> int:
    return math.ceil(math.hypot(width / 2, height / 2))


@lru_cache(maxsize=64)
def _distance_grid(height: int, width: int) -> np.ndarray:
    rows = np.arange(height) - height // 2
    cols = np.arange(width) - width // 2
    grid = np.sqrt(rows[:, None] ** 2 + cols[None, :] ** 2)
    grid.setflags(write=False)
    return grid


def low_mask(height: int, width: int, r: float) -> np.ndarray:
    """Boolean mask of coefficients at centered distance <= r."""
    if r < 0:
        raise ValueError(f"cutoff radius must be nonnegative, got {r}")
    return _distance_grid(height, width) <= r


def lowpass(f: np.ndarray, r: float) -> np.ndarray:
    mask = low_mask(f.shape[0], f.shape[1], r)
    return np.where(mask[:, :, None], f, 0)


def highpass(f: np.ndarray, r: float) -> np.ndarray:
    mask = low_mask(f.shape[0], f.shape[1], r)
    return np.where(mask[:, :, None], 0, f)


def highpass_energy_ratio(x: np.ndarray, r: float) -> float:
    """Fraction of spectral energy (all channels) strictly above radius ``r``."""
    f = dft2(x)
    power = (f.real ** 2 + f.imag ** 2).sum(axis=2)
    total = power.sum()
    if total == 0.0:
        return 0.0
    high = power[~low_mask(f.shape[0], f.shape[1], r)].sum()
    return float(high / total)


def merge_spectra(base: np.ndarray, donor: np.ndarray, r: float) -> np.ndarray:
    """Spectrum keeping ``base`` at/below ``r`` and ``donor`` above it."""
    base = np.asarray(base, dtype=np.float64)
    donor = np.asarray(donor, dtype=np.float64)
    if base.shape != donor.shape:
        raise ValueError(f"dimension mismatch: {base.shape} vs {donor.shape}")
    return lowpass(dft2(base), r) + highpass(dft2(donor), r)


def merge_high(base: np.ndarray, donor: np.ndarray, r: float) -> np.ndarray:
    return idft2(merge_spectra(base, donor, r))


def init_candidate(x_orig, fractal, r_start: int, oracle, original_label: int):
    """Lower the cutoff one step at a time until the merged image is adversarial.

    Returns ``(candidate, r)`` where ``r`` is the cutoff that produced it.
    Every attempt costs one query. Raises :class:`InitFailed` once ``r`` would
    drop below zero.
    """
    if r_start < 0:
        raise ValueError("r_start must be nonnegative")
    f_orig = dft2(x_orig)
    f_fractal = dft2(fractal)
    if f_orig.shape != f_fractal.shape:
        raise ValueError(f"dimension mismatch: {f_orig.shape} vs {f_fractal.shape}")
    for r in range(int(r_start), -1, -1):
        candidate = idft2(lowpass(f_orig, r) + highpass(f_fractal, r))
        if oracle.classify(candidate) != original_label:
            return candidate, r
    raise InitFailed(f"no adversarial merge for any cutoff in [0, {r_start}]")


def jump(m: np.ndarray, fractal: np.ndarray, r: float) -> np.ndarray:
    """Replace the band of ``m`` above ``r`` with the fractal's; result is unclamped."""
    fractal = check_image(fractal)
    m_img = np.asarray(m, dtype=np.float64).reshape(fractal.shape)
    f_mean = np.fft.fftshift(np.fft.fft2(m_img, axes=(0, 1)), axes=(0, 1))
    merged = lowpass(f_mean, r) + highpass(dft2(fractal), r)
    return idft2(merged, clamp=False).reshape(-1)
