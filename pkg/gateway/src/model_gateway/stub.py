"""Deterministic stand-in capabilities for CI runs without model weights.

text2image draws seeded noise over a two-axis color gradient, fills
average the known pixels, depth is a constant plane, and upscaling is
nearest-neighbor. Every function is a pure function of its arguments.
"""

from __future__ import annotations

import zlib

import numpy as np

DEPTH_METERS = 5.0
NO_KNOWN_FILL = 127  # mid-gray when a fill request has nothing to average


def text2image(prompt: str, width: int, height: int, seed: int) -> np.ndarray:
    """Seeded gradient-noise RGB8 image of the requested size."""
    rng = np.random.default_rng([seed % (1 << 63), zlib.crc32(prompt.encode("utf-8"))])
    x = np.linspace(0.15, 0.85, width)[None, :]
    y = np.linspace(0.1, 0.9, height)[:, None]
    base = np.stack([x + 0.0 * y, 0.5 * x + 0.5 * y, 0.0 * x + y], axis=-1)
    noise = rng.uniform(-0.12, 0.12, size=(height, width, 3))
    return (np.clip(base + noise, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def fill_unknown(image: np.ndarray, known: np.ndarray) -> np.ndarray:
    """Replace unknown pixels with the mean color of the known ones."""
    out = image.copy()
    if known.all():
        return out
    if known.any():
        fill = np.rint(image[known].mean(axis=0)).astype(np.uint8)
    else:
        fill = np.full(3, NO_KNOWN_FILL, dtype=np.uint8)
    out[~known] = fill
    return out


def depth_raster(height: int, width: int) -> bytes:
    """Row-major little-endian float32 constant-depth raster."""
    return np.full((height, width), DEPTH_METERS, dtype="<f4").tobytes()


def upscale_nearest(image: np.ndarray, scale: int) -> np.ndarray:
    return np.repeat(np.repeat(image, scale, axis=0), scale, axis=1)
