"""Training losses and their weighted combination.

All tensors are N x C x H x W. Feature extractors are callables returning a
list of activation maps; they are frozen and shared read-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import torch
import torch.nn as nn
import torch.nn.functional as F

COMPONENTS = ("adv", "l1", "perc", "style", "fm")


class NonFiniteLossError(FloatingPointError):
    pass


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise ValueError(f"{what}: shapes differ {tuple(a.shape)} vs {tuple(b.shape)}")


def adversarial_loss(d_real_logits, d_fake_logits, side: str):
    """Cross-entropy GAN loss on logit grids, averaged over grid cells and batch.

    discriminator: -E[log s(real)] - E[log(1 - s(fake))]
    generator:     -E[log s(fake)]   (non-saturating)
    """
    if side == "discriminator":
        _same_shape(d_real_logits, d_fake_logits, "adversarial_loss")
        real = F.binary_cross_entropy_with_logits(d_real_logits, torch.ones_like(d_real_logits))
        fake = F.binary_cross_entropy_with_logits(d_fake_logits, torch.zeros_like(d_fake_logits))
        return real + fake
    if side == "generator":
        if d_real_logits is not None:
            _same_shape(d_real_logits, d_fake_logits, "adversarial_loss")
        return F.binary_cross_entropy_with_logits(d_fake_logits, torch.ones_like(d_fake_logits))
    raise ValueError(f"side must be 'generator' or 'discriminator', got {side!r}")


def feature_matching_loss(real_acts, fake_acts):
    """Sum over layers of the per-element mean absolute activation difference."""
    if len(real_acts) != len(fake_acts):
        raise ValueError(f"activation lists differ in length: {len(real_acts)} vs {len(fake_acts)}")
    if not real_acts:
        raise ValueError("need at least one activation map")
    total = 0.0
    for real, fake in zip(real_acts, fake_acts):
        _same_shape(real, fake, "feature_matching_loss")
        total = total + (real - fake).abs().mean()
    return total


def gram_matrix(f):
    """Batched C x C gram matrix normalised by the feature map's C*H*W."""
    n, c, h, w = f.shape
    flat = f.reshape(n, c, h * w)
    return flat @ flat.transpose(1, 2) / (c * h * w)


def perceptual_loss(pred, gt, extractor):
    _same_shape(pred, gt, "perceptual_loss")
    total = 0.0
    for fp, fg in zip(extractor(pred), extractor(gt)):
        total = total + (fg - fp).abs().mean()
    return total


def style_loss(pred, gt, extractor):
    """Mean over layers of the entrywise L1 norm of the gram difference (batch-averaged)."""
    _same_shape(pred, gt, "style_loss")
    feats_p = extractor(pred)
    feats_g = extractor(gt)
    per_layer = [
        (gram_matrix(fp) - gram_matrix(fg)).abs().sum(dim=(1, 2)).mean()
        for fp, fg in zip(feats_p, feats_g)
    ]
    return sum(per_layer) / len(per_layer)


def l1_masked(pred, gt, mask):
    """Whole-image L1 distance divided by (masked pixel count * channels)."""
    _same_shape(pred, gt, "l1_masked")
    if mask.dim() == pred.dim() - 1:
        mask = mask.unsqueeze(1)
    if mask.shape[0] != pred.shape[0] or mask.shape[-2:] != pred.shape[-2:]:
        raise ValueError("mask does not match image batch/spatial shape")
    count = mask.sum()
    if float(count) == 0:
        raise ValueError("l1_masked is undefined for an all-zero mask")
    return (pred - gt).abs().sum() / (count * pred.shape[1])


@dataclass
class LossBundle:
    adv: object = None
    l1: object = None
    perc: object = None
    style: object = None
    fm: object = None
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    fm_weight: float = 1.0
    total: object = None

    def as_row(self) -> dict:
        """Plain floats (None for inactive components)."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if torch.is_tensor(v):
                v = v.detach()
            out[f.name] = None if v is None else float(v)
        return out


def total_loss(adv, l1=None, perc=None, style=None, fm=None,
               lambdas=(1.0, 1.0, 1.0), fm_weight: float = 1.0) -> LossBundle:
    """adv + l1*L1 + l2*perc + l3*style (+ fm_weight*fm on the edge stage).

    Components are promoted to float64 before summing so the logged total is
    the exact sum of the logged components.
    """
    parts = {"adv": adv, "l1": l1, "perc": perc, "style": style, "fm": fm}
    for name, v in parts.items():
        if v is None:
            continue
        value = float(v.detach()) if torch.is_tensor(v) else float(v)
        if not math.isfinite(value):
            raise NonFiniteLossError(f"loss component {name} is not finite ({value})")
    weights = {"adv": 1.0, "l1": lambdas[0], "perc": lambdas[1], "style": lambdas[2], "fm": fm_weight}

    def f64(v):
        return v.double() if torch.is_tensor(v) else float(v)

    total = None
    for name in COMPONENTS:
        v = parts[name]
        if v is None:
            continue
        term = f64(v) if weights[name] == 1.0 else weights[name] * f64(v)
        total = term if total is None else total + term
    if total is None:
        raise ValueError("no active loss components")
    return LossBundle(adv=adv, l1=l1, perc=perc, style=style, fm=fm,
                      lambda1=lambdas[0], lambda2=lambdas[1], lambda3=lambdas[2],
                      fm_weight=fm_weight, total=total)


# --- feature extractors -------------------------------------------------------

class IdentityExtractor(nn.Module):
    def forward(self, x):
        return [x]


class TinyConvExtractor(nn.Module):
    """Fixed random two-stage conv stack; a stand-in when no pretrained weights exist."""

    def __init__(self, in_channels: int = 3, widths=(8, 16), seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.stages = nn.ModuleList()
        cin = in_channels
        for i, cout in enumerate(widths):
            conv = nn.Conv2d(cin, cout, 3, stride=1 if i == 0 else 2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) / math.sqrt(cin * 9))
                conv.bias.zero_()
            self.stages.append(conv)
            cin = cout
        self.requires_grad_(False)

    def forward(self, x):
        feats = []
        h = x.to(self.stages[0].weight.dtype)
        for conv in self.stages:
            h = F.relu(conv(h))
            feats.append(h)
        return feats


# VGG-19 conv configuration; "M" is 2x2 max pooling
VGG19_CFG = (64, 64, "M", 128, 128, "M", 256, 256, 256, 256, "M",
             512, 512, 512, 512, "M", 512, 512, 512, 512, "M")
# indices in the features Sequential of the last ReLU of each conv stage
VGG19_STAGE_ENDS = (3, 8, 17, 26, 35)
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class VGG19Extractor(nn.Module):
    """VGG-19 trunk returning the post-ReLU map ending each conv stage.

    Inputs are signed-range RGB; they are mapped to unit range and ImageNet
    normalised. Weights come from a checkpoint container (see ``checkpoint``).
    """

    def __init__(self, layers=VGG19_STAGE_ENDS):
        super().__init__()
        mods = []
        cin = 3
        for v in VGG19_CFG:
            if v == "M":
                mods.append(nn.MaxPool2d(2, 2))
            else:
                mods += [nn.Conv2d(cin, v, 3, padding=1), nn.ReLU()]
                cin = v
        self.features = nn.Sequential(*mods)
        self.layers = tuple(layers)
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))
        self.requires_grad_(False)

    @classmethod
    def from_file(cls, path) -> "VGG19Extractor":
        from .checkpoint import load_tensors

        net = cls()
        tensors, _ = load_tensors(path)
        missing = [k for k in net.features.state_dict() if f"features.{k}" not in tensors]
        if missing:
            raise KeyError(f"extractor weights in {path} lack {missing[:3]}...")
        net.features.load_state_dict({k[len("features."):]: v for k, v in tensors.items()
                                      if k.startswith("features.")})
        return net.eval()

    def forward(self, x):
        h = ((x + 1.0) / 2.0 - self.mean.to(x.dtype)) / self.std.to(x.dtype)
        feats = []
        last = max(self.layers)
        for i, mod in enumerate(self.features):
            h = mod(h)
            if i in self.layers:
                feats.append(h)
            if i == last:
                break
        return feats


def make_extractor(name: str, path: str | None = None, seed: int = 0) -> nn.Module:
    if name == "identity":
        return IdentityExtractor()
    if name == "tiny":
        return TinyConvExtractor(seed=seed)
    if name == "vgg19":
        if not path:
            raise FileNotFoundError("vgg19 extractor needs a weight file path")
        return VGG19Extractor.from_file(path)
    raise ValueError(f"unknown extractor {name!r}")
