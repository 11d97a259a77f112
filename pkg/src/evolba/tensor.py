"""Image-as-vector helpers shared by every other module.

Images are float64 arrays of shape ``(height, width, 3)`` with values in
[0, 1]. The optimizer works on flat, unclamped vectors of length ``3*w*h``
in the same row-major, channel-interleaved order; clamping only happens when
a point is handed to an oracle.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

CHANNELS = 3
EVB1_MAGIC = b"EVB1"


def check_image(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != CHANNELS:
        raise ValueError(f"expected an image of shape (h, w, 3), got {x.shape}")
    return x


def as_image(data, width: int, height: int) -> np.ndarray:
    """Build a validated image from any array-like of 3*w*h values."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.size != CHANNELS * width * height:
        raise ValueError(
            f"expected {CHANNELS * width * height} values for a {width}x{height} image, got {arr.size}"
        )
    arr = arr.reshape(height, width, CHANNELS)
    if np.any(arr < 0.0) or np.any(arr > 1.0) or not np.all(np.isfinite(arr)):
        raise ValueError("image values must lie in [0, 1]")
    return arr


def l2_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size != b.size:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a.ravel() - b.ravel()))


def blend(x: np.ndarray, x_prime: np.ndarray, alpha: float) -> np.ndarray:
    """Point ``(1 - alpha) * x + alpha * x_prime`` on the segment, clamped to [0, 1]."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    x = np.asarray(x, dtype=np.float64)
    x_prime = np.asarray(x_prime, dtype=np.float64)
    if x.shape != x_prime.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {x_prime.shape}")
    # endpoints are returned verbatim so that alpha=0/1 is exact
    if alpha == 0.0:
        return np.clip(x, 0.0, 1.0)
    if alpha == 1.0:
        return np.clip(x_prime, 0.0, 1.0)
    return np.clip((1.0 - alpha) * x + alpha * x_prime, 0.0, 1.0)


def clamp01(v: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.size != int(np.prod(shape)):
        raise ValueError(f"vector of length {v.size} does not fit image shape {shape}")
    return np.clip(v, 0.0, 1.0).reshape(shape)


def flatten(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=np.float64).reshape(-1).copy()


# -- file I/O -----------------------------------------------------------------

def save_evb1(path: str | Path, x: np.ndarray) -> None:
    x = check_image(x)
    h, w, _ = x.shape
    payload = np.ascontiguousarray(x, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(EVB1_MAGIC + struct.pack("<II", w, h) + payload)


def load_evb1(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != EVB1_MAGIC:
        raise ValueError(f"{path}: not an EVB1 file")
    w, h = struct.unpack("<II", raw[4:12])
    expected = 12 + 4 * CHANNELS * w * h
    if len(raw) != expected:
        raise ValueError(f"{path}: truncated EVB1 payload ({len(raw)} bytes, expected {expected})")
    data = np.frombuffer(raw, dtype="<f4", offset=12).astype(np.float64)
    return as_image(data, w, h)


def save_png(path: str | Path, x: np.ndarray) -> None:
    from PIL import Image

    x = check_image(x)
    pixels = np.rint(np.clip(x, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(pixels, mode="RGB").save(path)


def load_png(path: str | Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def load_image(path: str | Path, size: tuple[int, int] | None = None) -> np.ndarray:
    """Load a PNG or EVB1 image; ``size`` is ``(width, height)`` and must match exactly."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(4)
        x = load_evb1(path) if head == EVB1_MAGIC else load_png(path)
    except (OSError, ValueError) as exc:
        raise ImageLoadError(f"cannot load {path}: {exc}") from exc
    if size is not None and (x.shape[1], x.shape[0]) != tuple(size):
        raise ImageLoadError(
            f"{path}: image is {x.shape[1]}x{x.shape[0]}, expected {size[0]}x{size[1]}"
        )
    return x


def save_image(path: str | Path, x: np.ndarray) -> None:
    if str(path).lower().endswith(".png"):
        save_png(path, x)
    else:
        save_evb1(path, x)


class ImageLoadError(ValueError):
    pass
