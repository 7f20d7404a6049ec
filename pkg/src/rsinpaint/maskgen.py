"""Mask families for the inpainting ablations, plus the jigsaw pretext shuffle.

Every generator takes an explicit ``numpy.random.Generator``; a fixed seed
gives a bit-identical mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .imaging import Image, Mask, load_mask

MASK_KINDS = ("rectangular", "salt_pepper", "irregular")
DEFAULT_FRACTIONS = {
    "rectangular": (0.05, 0.30),
    "salt_pepper": (0.05, 0.95),
    "irregular": (0.05, 0.50),
}
MAX_ATTEMPTS = 1000
RASTER_SUFFIXES = {".png", ".bmp", ".jpg", ".jpeg", ".tif", ".tiff"}


class MaskSpecError(ValueError):
    pass


@dataclass(frozen=True)
class MaskSpec:
    kind: str = "rectangular"
    min_frac: float | None = None
    max_frac: float | None = None
    seed: int = 0
    irregular_source: str = "procedural"

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise MaskSpecError(f"unknown mask kind {self.kind!r}")
        lo, hi = DEFAULT_FRACTIONS[self.kind]
        if self.min_frac is None:
            object.__setattr__(self, "min_frac", lo)
        if self.max_frac is None:
            object.__setattr__(self, "max_frac", hi)
        if not 0.0 <= self.min_frac <= self.max_frac <= 1.0:
            raise MaskSpecError(
                f"need 0 <= min_frac <= max_frac <= 1, got ({self.min_frac}, {self.max_frac})"
            )

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def mask_coverage(mask: Mask) -> float:
    return mask.coverage


def _area_band(h, w, spec):
    total = h * w
    lo = math.ceil(spec.min_frac * total - 1e-9)
    hi = math.floor(spec.max_frac * total + 1e-9)
    if lo > hi:
        # band narrower than one pixel: accept the bracketing integer areas
        lo = math.floor(spec.min_frac * total)
        hi = math.ceil(spec.max_frac * total)
    return max(lo, 1), hi


def _feasible_sides(h, w, lo, hi):
    """Heights that admit at least one width with area in [lo, hi]."""
    heights = []
    for a in range(1, h + 1):
        bmin = max(1, -(-lo // a))
        bmax = min(w, hi // a)
        if bmin <= bmax:
            heights.append(a)
    return heights


def _nearest_areas(h, w, target):
    """Smallest and largest rectangle areas at the minimum distance from ``target``."""
    areas = {a * min(w, max(1, b)) for a in range(1, h + 1)
             for b in (math.floor(target / a), math.ceil(target / a))}
    best = min(abs(x - target) for x in areas)
    closest = [x for x in areas if abs(x - target) == best]
    return min(closest), max(closest)


def rectangular_mask(h: int, w: int, spec: MaskSpec, rng: np.random.Generator) -> Mask:
    """One axis-aligned rectangle of 1s fully inside the image.

    Height is drawn uniformly, width uniformly among values keeping the area
    inside the coverage band; heights with no such width are resampled.
    """
    if spec.kind != "rectangular":
        raise MaskSpecError(f"spec kind is {spec.kind!r}, not rectangular")
    if h * w < 1:
        raise MaskSpecError("image must have at least one pixel")
    lo, hi = _area_band(h, w, spec)
    if hi >= 1 and spec.min_frac == spec.max_frac and not _feasible_sides(h, w, lo, hi):
        lo, hi = _nearest_areas(h, w, spec.min_frac * h * w)
    if hi < 1 or not _feasible_sides(h, w, lo, hi):
        raise MaskSpecError(
            f"no integer rectangle in {h}x{w} has coverage in [{spec.min_frac}, {spec.max_frac}]"
        )
    for _ in range(MAX_ATTEMPTS):
        a = int(rng.integers(1, h + 1))
        bmin = max(1, -(-lo // a))
        bmax = min(w, hi // a)
        if bmin > bmax:
            continue
        b = int(rng.integers(bmin, bmax + 1))
        top = int(rng.integers(0, h - a + 1))
        left = int(rng.integers(0, w - b + 1))
        data = np.zeros((h, w), dtype=np.float32)
        data[top:top + a, left:left + b] = 1.0
        return Mask(data)
    raise MaskSpecError(f"rectangle sampling exceeded {MAX_ATTEMPTS} attempts")


def salt_pepper_mask(h: int, w: int, spec: MaskSpec, rng: np.random.Generator) -> Mask:
    """Scattered single pixels with an exact masked count.

    The target fraction is gaussian around the middle of the band (std a
    quarter of its width) and clipped to it; positions are drawn without
    replacement.
    """
    if spec.kind != "salt_pepper":
        raise MaskSpecError(f"spec kind is {spec.kind!r}, not salt_pepper")
    total = h * w
    centre = 0.5 * (spec.min_frac + spec.max_frac)
    spread = 0.25 * (spec.max_frac - spec.min_frac)
    frac = float(np.clip(rng.normal(centre, spread) if spread > 0 else centre,
                         spec.min_frac, spec.max_frac))
    count = int(round(frac * total))
    lo = math.ceil(spec.min_frac * total - 1e-9)
    hi = math.floor(spec.max_frac * total + 1e-9)
    if lo <= hi:
        count = min(max(count, lo), hi)
    flat = np.zeros(total, dtype=np.float32)
    flat[rng.choice(total, size=count, replace=False)] = 1.0
    return Mask(flat.reshape(h, w))


def _brush_strokes(h, w, rng, budget):
    """Random-walk strokes drawn one at a time until ``budget`` says stop."""
    canvas = np.zeros((h, w), dtype=np.uint8)
    scale = max(h, w)
    while True:
        n_vertex = int(rng.integers(4, 13))
        width = max(1, int(round(scale * rng.uniform(0.02, 0.08))))
        y, x = int(rng.integers(0, h)), int(rng.integers(0, w))
        angle = rng.uniform(0, 2 * np.pi)
        for _ in range(n_vertex):
            angle += rng.uniform(-np.pi / 3, np.pi / 3)
            length = scale * rng.uniform(0.05, 0.2)
            ny = int(np.clip(y + length * np.sin(angle), 0, h - 1))
            nx = int(np.clip(x + length * np.cos(angle), 0, w - 1))
            cv2.line(canvas, (x, y), (nx, ny), 1, width)
            y, x = ny, nx
        verdict = budget(canvas)
        if verdict is not None:
            return canvas, verdict


def irregular_mask(h: int, w: int, spec: MaskSpec, rng: np.random.Generator) -> Mask:
    """Free-form mask, either from a mask corpus directory or procedural strokes."""
    if spec.kind != "irregular":
        raise MaskSpecError(f"spec kind is {spec.kind!r}, not irregular")
    if spec.irregular_source and spec.irregular_source != "procedural":
        return _corpus_mask(h, w, Path(spec.irregular_source), rng)

    total = h * w
    lo = spec.min_frac * total
    hi = spec.max_frac * total

    def budget(canvas):
        n = int(canvas.sum())
        if n > hi:
            return False
        return True if n >= lo else None

    for _ in range(MAX_ATTEMPTS):
        canvas, ok = _brush_strokes(h, w, rng, budget)
        if ok:
            return Mask(canvas.astype(np.float32))
    raise MaskSpecError(f"irregular mask sampling exceeded {MAX_ATTEMPTS} attempts")


def _corpus_mask(h, w, directory, rng):
    if not directory.is_dir():
        raise FileNotFoundError(f"mask directory not found: {directory}")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in RASTER_SUFFIXES)
    if not files:
        raise FileNotFoundError(f"mask directory is empty: {directory}")
    chosen = files[int(rng.integers(0, len(files)))]
    data = load_mask(chosen).data
    mh, mw = data.shape
    if mh >= h and mw >= w:
        top = int(rng.integers(0, mh - h + 1))
        left = int(rng.integers(0, mw - w + 1))
        data = data[top:top + h, left:left + w]
    else:
        data = cv2.resize(data, (w, h), interpolation=cv2.INTER_NEAREST)
    return Mask((data >= 0.5).astype(np.float32))


_GENERATORS = {
    "rectangular": rectangular_mask,
    "salt_pepper": salt_pepper_mask,
    "irregular": irregular_mask,
}


def generate_mask(h: int, w: int, spec: MaskSpec, rng: np.random.Generator | None = None) -> Mask:
    return _GENERATORS[spec.kind](h, w, spec, spec.rng() if rng is None else rng)


def jigsaw_shuffle(img: Image, grid: int, rng: np.random.Generator):
    """Cut into grid x grid tiles and permute them; returns (image, permutation).

    ``perm[k]`` is the source tile placed at destination slot ``k`` (row-major).
    """
    shuffled = jigsaw_apply(img.data, grid, None, rng)
    return Image(shuffled[0], img.range_tag, img.kind), shuffled[1]


def jigsaw_apply(data: np.ndarray, grid: int, perm=None, rng=None):
    """Array-level tile permutation on the two leading (H, W) axes."""
    h, w = data.shape[:2]
    if grid < 1 or h % grid or w % grid:
        raise ValueError(f"{h}x{w} is not divisible into a {grid}x{grid} grid")
    if perm is None:
        perm = rng.permutation(grid * grid)
    perm = np.asarray(perm)
    th, tw = h // grid, w // grid
    tiles = data.reshape(grid, th, grid, tw, *data.shape[2:]).swapaxes(1, 2)
    tiles = tiles.reshape(grid * grid, th, tw, *data.shape[2:])[perm]
    out = tiles.reshape(grid, grid, th, tw, *data.shape[2:]).swapaxes(1, 2)
    return out.reshape(data.shape), perm


def jigsaw_unshuffle(img: Image, grid: int, perm) -> Image:
    inverse = np.argsort(np.asarray(perm))
    data, _ = jigsaw_apply(img.data, grid, inverse)
    return Image(data, img.range_tag, img.kind)
