"""Edge-guided three-stage GAN inpainting for remote-sensing imagery."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .imaging import (CannyConfig, Image, Mask, apply_mask, canny_edges, compose, load_image,
                      save_image, to_grayscale)
from .maskgen import MaskSpec, generate_mask, jigsaw_shuffle, jigsaw_unshuffle, mask_coverage
from .pipeline import ArchConfig, InpaintingModel, TrainConfig, inpaint, train_full, train_stage
from .evaluation import evaluate, psnr

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND", "CannyConfig", "Image", "Mask", "apply_mask", "canny_edges", "compose",
    "load_image", "save_image", "to_grayscale", "MaskSpec", "generate_mask", "jigsaw_shuffle",
    "jigsaw_unshuffle", "mask_coverage", "ArchConfig", "InpaintingModel", "TrainConfig",
    "inpaint", "train_full", "train_stage", "evaluate", "psnr",
]
