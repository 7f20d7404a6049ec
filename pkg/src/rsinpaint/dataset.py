"""Image folders, tiling, train/val/test splits, and training examples."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imaging import (CannyConfig, Image, Mask, canny_edges, load_image,
                      to_grayscale)
from .maskgen import MaskSpec, generate_mask

SPLIT_FRACTIONS = (0.6, 0.2, 0.2)
SPLIT_NAMES = ("train", "val", "test")
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


class DatasetError(ValueError):
    pass


def derive_seed(master: int, *names) -> int:
    """Stable 63-bit seed from a master seed and component names."""
    key = ":".join([str(master), *map(str, names)]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little") >> 1


@dataclass(frozen=True)
class TrainingExample:
    i_gt: Image
    i_gray: Image
    c_gt: Image
    mask: Mask
    id: str = ""

    def __post_init__(self):
        shapes = {self.i_gt.hw, self.i_gray.hw, self.c_gt.hw, tuple(self.mask.shape)}
        if len(shapes) != 1:
            raise DatasetError(f"example members disagree on H x W: {shapes}")


@dataclass
class SplitManifest:
    train: list
    val: list
    test: list
    seed: int
    fractions: tuple = SPLIT_FRACTIONS
    classes: dict = field(default_factory=dict)

    def part(self, name: str) -> list:
        if name not in SPLIT_NAMES:
            raise DatasetError(f"unknown split {name!r}")
        return getattr(self, name)

    def write(self, path) -> None:
        lines = [f"{name}\t{p}" for name in SPLIT_NAMES for p in self.part(name)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path, seed: int = 0) -> "SplitManifest":
        parts = {name: [] for name in SPLIT_NAMES}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            if not line.strip():
                continue
            try:
                name, p = line.split("\t", 1)
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: expected 'split<TAB>path'") from None
            if name not in parts:
                raise DatasetError(f"{path}:{lineno}: unknown split {name!r}")
            parts[name].append(p)
        return cls(parts["train"], parts["val"], parts["test"], seed)


def list_images(root) -> tuple[list[str], dict]:
    """Sorted image paths under ``root``; immediate subfolder names become class labels."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset directory not found: {root}")
    paths, classes = [], {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES:
            paths.append(str(p))
            rel = p.relative_to(root)
            if len(rel.parts) > 1:
                classes[str(p)] = rel.parts[0]
    if not paths:
        raise DatasetError(f"no images found under {root}")
    return paths, classes


def tile_image(img: Image, tile: int) -> list[Image]:
    h, w = img.hw
    if tile < 1 or h % tile or w % tile:
        raise ValueError(f"{h}x{w} is not divisible by tile size {tile}")
    return [
        Image(img.data[r:r + tile, c:c + tile], img.range_tag, img.kind)
        for r in range(0, h, tile)
        for c in range(0, w, tile)
    ]


def untile(tiles: list[Image], rows: int, cols: int) -> Image:
    first = tiles[0]
    strips = [np.concatenate([t.data for t in tiles[r * cols:(r + 1) * cols]], axis=1)
              for r in range(rows)]
    return Image(np.concatenate(strips, axis=0), first.range_tag, first.kind)


def make_splits(paths: list, seed: int) -> SplitManifest:
    n = len(paths)
    if n < 5:
        raise DatasetError(f"need at least 5 items to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [paths[i] for i in order]
    n_train = int(np.floor(SPLIT_FRACTIONS[0] * n))
    n_val = int(np.floor(SPLIT_FRACTIONS[1] * n))
    return SplitManifest(
        train=shuffled[:n_train],
        val=shuffled[n_train:n_train + n_val],
        test=shuffled[n_train + n_val:],
        seed=seed,
    )


def build_example(i_gt: Image, mask: Mask, canny: CannyConfig, id: str = "") -> TrainingExample:
    i_gt = i_gt.to_range("unit")
    i_gray = to_grayscale(i_gt)
    c_gt = canny_edges(i_gray, canny.sigma, canny.low, canny.high)
    return TrainingExample(i_gt, i_gray, c_gt, mask, id)


def make_example(path, mask_spec: MaskSpec, canny: CannyConfig,
                 rng: np.random.Generator) -> TrainingExample:
    img = load_image(path, "unit")
    if img.kind == "gray":
        img = Image(np.repeat(img.data, 3, axis=2), "unit", "rgb")
    h, w = img.hw
    return build_example(img, generate_mask(h, w, mask_spec, rng), canny, str(path))


def batch_iterator(items: list, batch_size: int, shuffle_seed: int | None, epoch: int = 0):
    """One epoch of batches; order depends only on (shuffle_seed, epoch)."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if not items:
        raise DatasetError("cannot iterate an empty split")
    if shuffle_seed is None:
        order = np.arange(len(items))
    else:
        order = np.random.default_rng(derive_seed(shuffle_seed, "epoch", epoch)).permutation(len(items))
    for start in range(0, len(items), batch_size):
        yield [items[i] for i in order[start:start + batch_size]]


class ExamplePool:
    """Decoded images with their gray/edge maps cached; masks drawn on request.

    With ``fixed_masks`` each item keeps one mask for the whole run (what
    evaluation uses); otherwise a fresh mask is drawn per epoch.
    """

    def __init__(self, paths, mask_spec: MaskSpec, canny: CannyConfig, seed: int,
                 tile: int = 0, fixed_masks: bool = False):
        self.mask_spec = mask_spec
        self.canny = canny
        self.seed = seed
        self.fixed_masks = fixed_masks
        self._base = []
        for path in paths:
            img = load_image(path, "unit")
            if img.kind == "gray":
                img = Image(np.repeat(img.data, 3, axis=2), "unit", "rgb")
            pieces = tile_image(img, tile) if tile else [img]
            for k, piece in enumerate(pieces):
                ident = f"{path}#{k}" if tile else str(path)
                self._base.append(build_example(piece, Mask.zeros(*piece.hw), canny, ident))

    @classmethod
    def from_images(cls, images, mask_spec, canny, seed, fixed_masks=False, ids=None):
        pool = cls([], mask_spec, canny, seed, fixed_masks=fixed_masks)
        ids = ids or [f"img{k}" for k in range(len(images))]
        pool._base = [build_example(img, Mask.zeros(*img.hw), canny, i) for img, i in zip(images, ids)]
        return pool

    def __len__(self):
        return len(self._base)

    @property
    def ids(self):
        return [ex.id for ex in self._base]

    def get(self, index: int, epoch: int = 0) -> TrainingExample:
        base = self._base[index]
        salt = ("mask", base.id) if self.fixed_masks else ("mask", base.id, epoch)
        rng = np.random.default_rng(derive_seed(self.seed, *salt))
        h, w = base.i_gt.hw
        mask = generate_mask(h, w, self.mask_spec, rng)
        return TrainingExample(base.i_gt, base.i_gray, base.c_gt, mask, base.id)
