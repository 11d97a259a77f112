"""Fractal donor images from random iterated function systems.

A system is a handful of 2D affine maps ``(x, y) -> (a x + b y + e, c x + d y + f)``
picked with probability proportional to the area scaling ``|a d - b c|``.
Rendering runs the chaos game and splats visited points as white pixels on a
black canvas.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import spectral
from .tensor import load_image

DET_FLOOR = 1e-6
DEFAULT_POINTS = 100_000
BURN_IN = 100


class DegenerateFractal(ValueError):
    """The attractor collapsed (single pixel) or escaped to infinity."""


@dataclass(frozen=True)
class IfsSystem:
    maps: np.ndarray  # (k, 6) rows of a, b, c, d, e, f
    probabilities: np.ndarray

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=np.float64)
        probs = np.asarray(self.probabilities, dtype=np.float64)
        if maps.ndim != 2 or maps.shape[1] != 6 or maps.shape[0] < 2:
            raise ValueError("an IFS needs at least 2 affine maps of 6 coefficients")
        if probs.shape != (maps.shape[0],) or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError("map probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "probabilities", probs)

    @classmethod
    def from_maps(cls, maps) -> "IfsSystem":
        maps = np.asarray(maps, dtype=np.float64)
        weight = np.abs(maps[:, 0] * maps[:, 3] - maps[:, 1] * maps[:, 2]) + DET_FLOOR
        return cls(maps, weight / weight.sum())


def sample_system(seed: int, n_maps: int) -> IfsSystem:
    if not 2 <= n_maps <= 8:
        raise ValueError("n_maps must be between 2 and 8")
    rng = np.random.default_rng(seed)
    return IfsSystem.from_maps(rng.uniform(-1.0, 1.0, size=(n_maps, 6)))


def chaos_game(system: IfsSystem, n_points: int, seed: int = 0) -> np.ndarray:
    """Orbit of the origin under randomly chosen maps, burn-in dropped; shape (n_points, 2)."""
    rng = np.random.default_rng(seed)
    choice = rng.choice(len(system.maps), size=n_points + BURN_IN, p=system.probabilities)
    coeffs = system.maps[choice].tolist()
    pts = np.empty((n_points, 2))
    x = y = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for i, (a, b, c, d, e, f) in enumerate(coeffs):
            x, y = a * x + b * y + e, c * x + d * y + f
            if i >= BURN_IN:
                pts[i - BURN_IN] = x, y
    return pts


def render(system: IfsSystem, width: int, height: int, n_points: int = DEFAULT_POINTS, seed: int = 0) -> np.ndarray:
    if n_points < 10_000:
        raise ValueError("render needs at least 10,000 points")
    pts = chaos_game(system, n_points, seed)
    if not np.all(np.isfinite(pts)):
        raise DegenerateFractal("orbit diverged")
    lo = pts.min(axis=0)
    span = pts.max(axis=0) - lo
    if span.max() <= 1e-12 * max(1.0, np.abs(lo).max()):
        raise DegenerateFractal("attractor collapsed to a single point")
    scale = np.array([width - 1, height - 1], dtype=np.float64)
    # a flat axis (segment attractor) is centered rather than stretched
    unit = np.where(span > 0, (pts - lo) / np.where(span > 0, span, 1.0), 0.5)
    cols, rows = np.rint(unit * scale).astype(int).T
    canvas = np.zeros((height, width))
    canvas[rows, cols] = 1.0
    if np.count_nonzero(canvas) <= 1:
        raise DegenerateFractal("attractor fits in one pixel")
    return np.repeat(canvas[:, :, None], 3, axis=2)


def fill_ratio(img: np.ndarray) -> float:
    return float(np.count_nonzero(img[:, :, 0]) / img[:, :, 0].size)


def acceptable(img: np.ndarray, r_check: float = 50.0) -> bool:
    """Fill ratio in [0.05, 0.95] and some energy above ``r_check`` (or the highest band that exists)."""
    if not 0.05 <= fill_ratio(img) <= 0.95:
        return False
    h, w, _ = img.shape
    # a small canvas has no frequencies at r_check; fall back to its outermost ring
    r = min(r_check, spectral.max_radius(w, h) - 1)
    return spectral.highpass_energy_ratio(img, r) > 0.0


def generate(seed: int, width: int, height: int, n_maps: int = 3, n_points: int = DEFAULT_POINTS,
             max_attempts: int = 100) -> tuple[np.ndarray, IfsSystem]:
    """Sample systems from ``seed`` until one renders an acceptable fractal."""
    seeds = np.random.SeedSequence(seed).spawn(max_attempts)
    for child in seeds:
        sub = int(child.generate_state(1)[0])
        system = sample_system(sub, n_maps)
        try:
            img = render(system, width, height, n_points, seed=sub)
        except DegenerateFractal:
            continue
        if acceptable(img):
            return img, system
    raise DegenerateFractal(f"no acceptable fractal after {max_attempts} attempts (seed {seed})")


def load_fractal(path: str | Path, width: int, height: int) -> np.ndarray:
    return load_image(path, size=(width, height))
