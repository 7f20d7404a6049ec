"""Image and mask containers, raster I/O, grayscale, canny, and mask algebra.

Conventions: images are H x W x C float32 arrays tagged with a value range
(``unit`` = [0, 1], ``signed`` = [-1, 1]) and a kind (rgb, gray, edge). Masks
are H x W arrays with 1 marking missing pixels and 0 the known background.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError
from scipy import ndimage

from . import _kernels

RANGES = {"unit": (0.0, 1.0), "signed": (-1.0, 1.0)}
KINDS = {"rgb": 3, "gray": 1, "edge": 1}
GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


class ImageIOError(OSError):
    """Base for raster read/write failures."""


class ImageNotFoundError(ImageIOError, FileNotFoundError):
    pass


class ImageDecodeError(ImageIOError):
    pass


class UnsupportedChannelsError(ImageIOError):
    pass


@dataclass(frozen=True)
class Image:
    data: np.ndarray
    range_tag: str = "unit"
    kind: str = "rgb"

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise ValueError(f"image data must be H x W x C, got shape {data.shape}")
        if self.range_tag not in RANGES:
            raise ValueError(f"unknown range_tag {self.range_tag!r}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        h, w, c = data.shape
        if h < 1 or w < 1:
            raise ValueError("image must be at least 1 x 1")
        if c != KINDS[self.kind]:
            raise ValueError(f"kind {self.kind!r} needs {KINDS[self.kind]} channels, got {c}")
        lo, hi = RANGES[self.range_tag]
        if data.size and (data.min() < lo or data.max() > hi or not np.isfinite(data).all()):
            raise ValueError(f"values outside {self.range_tag} range [{lo}, {hi}]")
        if self.kind == "edge" and not np.isin(data, (0.0, 1.0)).all():
            raise ValueError("edge images must be exactly 0 or 1")
        object.__setattr__(self, "data", data)

    @property
    def shape(self):
        return self.data.shape

    @property
    def hw(self):
        return self.data.shape[:2]

    def to_range(self, range_tag: str) -> "Image":
        """Affine conversion between unit and signed ranges (edges stay {0,1})."""
        if range_tag == self.range_tag or self.kind == "edge":
            return Image(self.data, range_tag if self.kind != "edge" else self.range_tag, self.kind)
        if range_tag == "signed":
            return Image(self.data * 2.0 - 1.0, "signed", self.kind)
        return Image(np.clip((self.data + 1.0) / 2.0, 0.0, 1.0), "unit", self.kind)


@dataclass(frozen=True)
class Mask:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 3 and data.shape[2] == 1:
            data = data[:, :, 0]
        if data.ndim != 2:
            raise ValueError(f"mask must be H x W, got shape {data.shape}")
        if not np.isin(data, (0, 1)).all():
            raise ValueError("mask values must be exactly 0 or 1")
        object.__setattr__(self, "data", data.astype(np.float32))

    @property
    def shape(self):
        return self.data.shape

    @property
    def coverage(self) -> float:
        return float(self.data.sum()) / self.data.size

    @classmethod
    def zeros(cls, h: int, w: int) -> "Mask":
        return cls(np.zeros((h, w), dtype=np.float32))

    @classmethod
    def ones(cls, h: int, w: int) -> "Mask":
        return cls(np.ones((h, w), dtype=np.float32))


@dataclass(frozen=True)
class CannyConfig:
    sigma: float = 2.0
    low: float = 0.1
    high: float = 0.2

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("canny sigma must be non-negative")
        if not 0 < self.low < self.high:
            raise ValueError("canny thresholds need 0 < low < high")


def load_image(path, range_tag: str = "unit") -> Image:
    path = Path(path)
    if not path.is_file():
        raise ImageNotFoundError(f"no such image file: {path}")
    try:
        with PILImage.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("L", "1", "P", "RGB", "RGBA", "LA", "I;16"):
                if mode == "P":
                    im = im.convert("RGB")
                elif mode == "1":
                    im = im.convert("L")
                arr = np.asarray(im)
            else:
                raise UnsupportedChannelsError(f"unsupported raster mode {mode!r} in {path}")
    except UnidentifiedImageError as exc:
        raise ImageDecodeError(f"cannot decode {path}: {exc}") from exc
    except OSError as exc:
        if isinstance(exc, ImageIOError):
            raise
        raise ImageDecodeError(f"cannot decode {path}: {exc}") from exc

    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.shape[2] == 4:
        arr = arr[:, :, :3]
    elif arr.shape[2] == 2:
        arr = arr[:, :, :1]
    if arr.shape[2] not in (1, 3):
        raise UnsupportedChannelsError(f"{path} has {arr.shape[2]} channels")
    unit = arr.astype(np.float32) / 255.0
    kind = "rgb" if unit.shape[2] == 3 else "gray"
    img = Image(unit, "unit", kind)
    return img.to_range(range_tag)


def to_uint8(img: Image) -> np.ndarray:
    data = img.data
    if img.range_tag == "signed" and img.kind != "edge":
        data = (data + 1.0) / 2.0
    return np.clip(np.rint(data * 255.0), 0, 255).astype(np.uint8)


def save_image(img: Image, path) -> None:
    path = Path(path)
    if not path.parent.is_dir():
        raise ImageIOError(f"parent directory does not exist: {path.parent}")
    arr = to_uint8(img)
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    try:
        PILImage.fromarray(arr).save(path, format="PNG")
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc


def load_mask(path) -> Mask:
    """Read a single-channel raster mask; anything >= 0.5 of full scale is masked."""
    img = load_image(path, "unit")
    data = img.data.mean(axis=2) if img.kind == "rgb" else img.data[:, :, 0]
    return Mask((data >= 0.5).astype(np.float32))


def save_mask(mask: Mask, path) -> None:
    path = Path(path)
    if not path.parent.is_dir():
        raise ImageIOError(f"parent directory does not exist: {path.parent}")
    PILImage.fromarray((mask.data * 255).astype(np.uint8)).save(path, format="PNG")


def to_grayscale(img: Image) -> Image:
    if img.kind != "rgb":
        raise ValueError(f"to_grayscale needs an rgb image, got {img.kind}")
    gray = img.data.astype(np.float64) @ GRAY_WEIGHTS
    lo, hi = RANGES[img.range_tag]
    return Image(np.clip(gray, lo, hi)[:, :, None], img.range_tag, "gray")


def canny_edges(img: Image, sigma: float = 2.0, low: float = 0.1, high: float = 0.2) -> Image:
    """Binary canny edge map of a grayscale image.

    Gradients are unnormalized Sobel responses of the gaussian-smoothed unit
    range image, so the thresholds live on the same scale as scikit-image's.
    """
    if img.kind != "gray":
        raise ValueError(f"canny_edges needs a gray image, got {img.kind}")
    CannyConfig(sigma, low, high)
    unit = img.to_range("unit").data[:, :, 0].astype(np.float64)
    smoothed = ndimage.gaussian_filter(unit, sigma, mode="nearest") if sigma > 0 else unit
    gx = np.ascontiguousarray(ndimage.sobel(smoothed, axis=1, mode="nearest"))
    gy = np.ascontiguousarray(ndimage.sobel(smoothed, axis=0, mode="nearest"))
    mag = np.ascontiguousarray(np.hypot(gx, gy))
    tol = 1e-9 * float(mag.max()) if mag.size else 0.0
    nms = _kernels.non_max_suppression(mag, gx, gy, tol)
    edges = np.asarray(_kernels.hysteresis(np.ascontiguousarray(nms), float(low), float(high)))
    return Image(edges.astype(np.float32)[:, :, None], img.range_tag, "edge")


def _check_hw(a, b, what="shapes"):
    if tuple(a[:2]) != tuple(b[:2]):
        raise ValueError(f"spatial {what} differ: {tuple(a[:2])} vs {tuple(b[:2])}")


def apply_mask(img: Image, mask: Mask) -> Image:
    _check_hw(img.shape, mask.shape)
    return Image(img.data * (1.0 - mask.data)[:, :, None], img.range_tag, img.kind)


def compose(pred: Image, gt: Image, mask: Mask) -> Image:
    """Known pixels from ``gt``, masked pixels from ``pred``; selection, not blending."""
    _check_hw(pred.shape, gt.shape)
    _check_hw(gt.shape, mask.shape)
    if pred.kind != gt.kind or pred.range_tag != gt.range_tag:
        raise ValueError("compose needs pred and gt of the same kind and range")
    sel = mask.data[:, :, None] > 0.5
    return Image(np.where(sel, pred.data, gt.data), gt.range_tag, gt.kind)
