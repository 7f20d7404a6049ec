"""Procedural aerial-looking RGB tiles for smoke runs and tests.

Smooth terrain colour fields with a few rectangular roofs and straight
roads; enough structure for edges and texture, no external data needed.
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from .imaging import Image, save_image


def synthetic_tile(size: int, rng: np.random.Generator) -> Image:
    yy, xx = np.mgrid[0:size, 0:size] / size
    base = rng.uniform(0.25, 0.6, size=3)
    tilt = rng.uniform(-0.2, 0.2, size=(2, 3))
    img = base + xx[..., None] * tilt[0] + yy[..., None] * tilt[1]
    freq = rng.uniform(2, 5, size=2)
    img += 0.05 * np.sin(2 * np.pi * (freq[0] * xx + freq[1] * yy))[..., None]

    canvas = np.ascontiguousarray(img.astype(np.float32))
    for _ in range(int(rng.integers(1, 3))):
        p0 = tuple(int(v) for v in rng.integers(0, size, size=2))
        p1 = tuple(int(v) for v in rng.integers(0, size, size=2))
        cv2.line(canvas, p0, p1, tuple(float(v) for v in rng.uniform(0.55, 0.75, size=3)),
                 max(1, size // 32))
    for _ in range(int(rng.integers(2, 5))):
        h, w = rng.integers(size // 8, size // 3, size=2)
        top, left = rng.integers(0, size - h), rng.integers(0, size - w)
        canvas[top:top + h, left:left + w] = rng.uniform(0.1, 0.9, size=3)
    return Image(np.clip(canvas, 0.0, 1.0), "unit", "rgb")


def synthetic_tiles(n: int, size: int, seed: int = 0) -> list[Image]:
    rng = np.random.default_rng(seed)
    return [synthetic_tile(size, rng) for _ in range(n)]


def write_synthetic_dataset(directory, n: int, size: int, seed: int = 0) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, img in enumerate(synthetic_tiles(n, size, seed)):
        path = directory / f"tile_{k:04d}.png"
        save_image(img, path)
        paths.append(path)
    return paths
