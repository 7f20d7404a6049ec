"""Generator and discriminator architectures and their building blocks.

Generator: three stride-2 encoder convs (width, 2*width, 4*width), a stack of
dilated residual blocks with CBAM after the middle and last block, and a
three-level transposed-conv decoder. Each decoder level is refined by a
gated-attention layer whose gate is the encoder map of the same resolution;
a two-conv skip branch carries encoder level 2 into the decoder.

Discriminator: six spectrally normalised convs, strides (2, 2, 2, 1, 1, 1),
producing a PatchGAN logit grid (28 x 28 for 256 x 256 inputs).
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils.parametrizations import spectral_norm


# keeps atanh of a +-1 pixel finite (about 7.25)
ATANH_LIMIT = 1.0 - 1e-6


class ArchError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorArch:
    in_channels: int
    out_channels: int
    head: str = "tanh"
    width: int = 64
    n_res: int = 8
    cbam: bool = True
    cbam_reduction: int = 16
    attention: bool = True
    skip: bool = True
    init_gain: float = 1.0
    # refine the first out_channels input planes: tanh(decoder + atanh(input))
    residual: bool = False

    def __post_init__(self):
        if self.head not in ("sigmoid", "tanh"):
            raise ArchError(f"unknown head {self.head!r}")
        if self.residual and (self.head != "tanh" or self.in_channels < self.out_channels):
            raise ArchError("residual refinement needs a tanh head and the refined image among the inputs")
        if self.cbam and (4 * self.width) % self.cbam_reduction:
            raise ArchError(
                f"CBAM reduction {self.cbam_reduction} does not divide {4 * self.width} channels"
            )

    @property
    def cbam_after(self) -> tuple:
        if not self.cbam or self.n_res == 0:
            return ()
        return tuple(sorted({max(self.n_res // 2, 1), self.n_res}))


# 256 -> 128 -> 64 -> 32 -> 31 -> 30 -> 28
STANDARD_LAYERS = ((1, 4, 2, 1), (2, 4, 2, 1), (4, 4, 2, 1), (8, 4, 1, 1), (8, 4, 1, 1), (0, 3, 1, 0))
# size-preserving stride-1 tail, for inputs too small for the standard tail (s / 8 grid)
COMPACT_LAYERS = ((1, 4, 2, 1), (2, 4, 2, 1), (4, 4, 2, 1), (8, 3, 1, 1), (8, 3, 1, 1), (0, 3, 1, 1))


def disc_layers(input_size: int) -> tuple:
    """Standard schedule when it leaves an output grid, else the compact one."""
    s = input_size // 8
    return STANDARD_LAYERS if s - 4 >= 1 else COMPACT_LAYERS


@dataclass(frozen=True)
class DiscriminatorArch:
    in_channels: int
    width: int = 64
    input_size: int = 256
    init_gain: float = 1.0

    # (out multiplier of width, kernel, stride, padding); 0 means one logit channel
    layers: tuple = STANDARD_LAYERS

    def __post_init__(self):
        if len(self.layers) != 6:
            raise ArchError(f"discriminator needs 6 conv layers, got {len(self.layers)}")
        if self.grid_size() < 1:
            raise ArchError(f"layer schedule leaves no output grid for {self.input_size}x{self.input_size} inputs")

    def grid_size(self) -> int:
        s = self.input_size
        for _, k, stride, p in self.layers:
            s = (s + 2 * p - k) // stride + 1
        return s


# conditioning arity per stage: G1 gray+edge+mask, G2 rgb+edge, G3 rgb+rgb
def g1_arch(**kw):
    return GeneratorArch(in_channels=3, out_channels=1, head="sigmoid", **kw)


def g2_arch(**kw):
    return GeneratorArch(in_channels=4, out_channels=3, head="tanh", **kw)


def g3_arch(**kw):
    kw.setdefault("residual", True)
    return GeneratorArch(in_channels=6, out_channels=3, head="tanh", **kw)


def _disc(in_channels, kw):
    kw.setdefault("layers", disc_layers(kw.get("input_size", 256)))
    return DiscriminatorArch(in_channels=in_channels, **kw)


def d1_arch(**kw):
    return _disc(2, kw)


def d2_arch(**kw):
    return _disc(4, kw)


def d3_arch(**kw):
    return _disc(6, kw)


def arch_to_dict(arch) -> dict:
    d = asdict(arch)
    d["type"] = type(arch).__name__
    if "layers" in d:
        d["layers"] = [list(x) for x in d["layers"]]
    return d


def arch_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("type")
    if kind == "GeneratorArch":
        return GeneratorArch(**d)
    if kind == "DiscriminatorArch":
        d["layers"] = tuple(tuple(x) for x in d["layers"])
        return DiscriminatorArch(**d)
    raise ArchError(f"unknown architecture type {kind!r}")


def arch_hash(archs: dict) -> str:
    blob = json.dumps({k: arch_to_dict(v) for k, v in sorted(archs.items())}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class ResidualBlock(nn.Module):
    def __init__(self, channels: int, dilation: int = 2):
        super().__init__()
        self.channels = channels
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=dilation, dilation=dilation)
        self.norm1 = nn.InstanceNorm2d(channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm2 = nn.InstanceNorm2d(channels)

    def residual(self, x):
        h = F.relu(self.norm1(self.conv1(x)))
        return self.norm2(self.conv2(h))

    def forward(self, x):
        if x.shape[1] != self.channels:
            raise ArchError(f"residual block expects {self.channels} channels, got {x.shape[1]}")
        return x + self.residual(x)


class GatedAttention(nn.Module):
    """Additive attention: ``skip * sigmoid(psi(relu(Wg gate + Wx skip)))``."""

    def __init__(self, gate_channels: int, skip_channels: int, inter_channels: int | None = None):
        super().__init__()
        inter = inter_channels or max(skip_channels // 2, 1)
        self.w_gate = nn.Conv2d(gate_channels, inter, 1)
        self.w_skip = nn.Conv2d(skip_channels, inter, 1)
        self.psi = nn.Conv2d(inter, 1, 1)

    def align(self, gate, skip):
        if gate.shape[0] != skip.shape[0]:
            raise ArchError("gate and skip batch sizes differ")
        if gate.shape[-2:] != skip.shape[-2:]:
            gate = F.interpolate(gate, size=skip.shape[-2:], mode="bilinear", align_corners=False)
        return gate

    def logits(self, gate, skip):
        gate = self.align(gate, skip)
        return self.psi(F.relu(self.w_gate(gate) + self.w_skip(skip)))

    def coefficients(self, gate, skip):
        return torch.sigmoid(self.logits(gate, skip))

    def forward(self, gate, skip):
        return skip * self.coefficients(gate, skip)


class CBAM(nn.Module):
    """Channel attention (shared MLP on avg+max pooling) then spatial attention."""

    def __init__(self, channels: int, reduction: int = 16, spatial_kernel: int = 7):
        super().__init__()
        if channels % reduction:
            raise ArchError(f"reduction {reduction} does not divide {channels} channels")
        self.mlp = nn.Sequential(
            nn.Conv2d(channels, channels // reduction, 1),
            nn.ReLU(),
            nn.Conv2d(channels // reduction, channels, 1),
        )
        self.spatial = nn.Conv2d(2, 1, spatial_kernel, padding=spatial_kernel // 2)

    def channel_attention(self, x):
        avg = self.mlp(F.adaptive_avg_pool2d(x, 1))
        mx = self.mlp(F.adaptive_max_pool2d(x, 1))
        return torch.sigmoid(avg + mx)

    def spatial_attention(self, x):
        pooled = torch.cat([x.mean(dim=1, keepdim=True), x.amax(dim=1, keepdim=True)], dim=1)
        return torch.sigmoid(self.spatial(pooled))

    def forward(self, x):
        x = x * self.channel_attention(x)
        return x * self.spatial_attention(x)


def _down(cin, cout, k, p):
    return nn.Sequential(nn.Conv2d(cin, cout, k, stride=2, padding=p), nn.InstanceNorm2d(cout), nn.ReLU())


def _up(cin, cout):
    return nn.Sequential(nn.ConvTranspose2d(cin, cout, 4, stride=2, padding=1), nn.InstanceNorm2d(cout), nn.ReLU())


class Generator(nn.Module):
    def __init__(self, arch: GeneratorArch):
        super().__init__()
        self.arch = arch
        w = arch.width
        self.enc1 = _down(arch.in_channels, w, 7, 3)
        self.enc2 = _down(w, 2 * w, 4, 1)
        self.enc3 = _down(2 * w, 4 * w, 4, 1)
        self.res = nn.ModuleList(ResidualBlock(4 * w) for _ in range(arch.n_res))
        self.cbam = nn.ModuleDict({str(i): CBAM(4 * w, arch.cbam_reduction) for i in arch.cbam_after})
        if arch.attention:
            self.att3 = GatedAttention(4 * w, 4 * w)
            self.att2 = GatedAttention(2 * w, 2 * w)
            self.att1 = GatedAttention(w, w)
        if arch.skip:
            self.skip = nn.Sequential(
                nn.Conv2d(2 * w, 2 * w, 3, padding=1), nn.InstanceNorm2d(2 * w), nn.ReLU(),
                nn.Conv2d(2 * w, 2 * w, 3, padding=1),
            )
        self.dec1 = _up(4 * w, 2 * w)
        self.dec2 = _up(2 * w, w)
        self.dec3 = nn.ConvTranspose2d(w, arch.out_channels, 4, stride=2, padding=1)

    def forward(self, x, return_features: bool = False):
        if x.shape[1] != self.arch.in_channels:
            raise ArchError(
                f"generator expects {self.arch.in_channels} input channels, got {x.shape[1]}"
            )
        if x.shape[-1] % 8 or x.shape[-2] % 8:
            raise ArchError(f"generator input H, W must be divisible by 8, got {tuple(x.shape[-2:])}")
        if min(x.shape[-2:]) < 16:
            # instance norm needs more than one bottleneck cell
            raise ArchError(f"generator input must be at least 16x16, got {tuple(x.shape[-2:])}")
        e1 = self.enc1(x)
        e2 = self.enc2(e1)
        e3 = self.enc3(e2)
        h = e3
        for i, block in enumerate(self.res, start=1):
            h = block(h)
            if str(i) in self.cbam:
                h = self.cbam[str(i)](h)
        bottleneck = h
        if self.arch.attention:
            h = self.att3(e3, h)
        d1 = self.dec1(h)
        if self.arch.skip:
            d1 = d1 + self.skip(e2)
        if self.arch.attention:
            d1 = self.att2(e2, d1)
        d2 = self.dec2(d1)
        if self.arch.attention:
            d2 = self.att1(e1, d2)
        out = self.dec3(d2)
        if self.arch.residual:
            base = x[:, :self.arch.out_channels].clamp(-ATANH_LIMIT, ATANH_LIMIT)
            out = out + torch.atanh(base)
        out = torch.sigmoid(out) if self.arch.head == "sigmoid" else torch.tanh(out)
        if return_features:
            return out, {"enc1": e1, "enc2": e2, "enc3": e3, "bottleneck": bottleneck, "dec1": d1, "dec2": d2}
        return out


class Discriminator(nn.Module):
    def __init__(self, arch: DiscriminatorArch):
        super().__init__()
        self.arch = arch
        layers = []
        cin = arch.in_channels
        for mult, k, s, p in arch.layers:
            cout = 1 if mult == 0 else mult * arch.width
            layers.append(nn.Conv2d(cin, cout, k, stride=s, padding=p))
            cin = cout
        self.convs = nn.ModuleList(layers)

    def forward(self, x):
        """Returns (logit grid, [activation of each of the conv layers])."""
        if x.shape[1] != self.arch.in_channels:
            raise ArchError(
                f"discriminator expects {self.arch.in_channels} input channels, got {x.shape[1]}"
            )
        size = self.arch.input_size
        if tuple(x.shape[-2:]) != (size, size):
            raise ArchError(f"discriminator built for {size}x{size} inputs, got {tuple(x.shape[-2:])}")
        feats = []
        h = x
        for i, conv in enumerate(self.convs):
            h = conv(h)
            if i < len(self.convs) - 1:
                h = F.leaky_relu(h, 0.2)
            feats.append(h)
        return h, feats


def _init_conv_weights(module: nn.Module, gain: float, generator: torch.Generator):
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            fan_in = m.weight.shape[1] * m.weight[0, 0].numel()
            if isinstance(m, nn.ConvTranspose2d):
                # weight layout is (in, out, kh, kw); fan-in is in_channels * kh * kw
                fan_in = m.weight.shape[0] * m.weight[0, 0].numel()
            with torch.no_grad():
                m.weight.copy_(torch.randn(m.weight.shape, generator=generator) * gain / math.sqrt(fan_in))
                if m.bias is not None:
                    m.bias.zero_()


def build_network(arch, seed: int = 0, dtype=torch.float32) -> nn.Module:
    """Construct and deterministically initialise a network for ``arch``.

    Conv weights ~ N(0, (gain / sqrt(fan_in))^2), biases zero. Discriminator
    convs are spectrally normalised after initialisation.
    """
    gen = torch.Generator().manual_seed(seed)
    if isinstance(arch, GeneratorArch):
        net = Generator(arch)
        _init_conv_weights(net, arch.init_gain, gen)
    elif isinstance(arch, DiscriminatorArch):
        net = Discriminator(arch)
        _init_conv_weights(net, arch.init_gain, gen)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            for i, conv in enumerate(net.convs):
                net.convs[i] = spectral_norm(conv)
    else:
        raise ArchError(f"not an architecture descriptor: {arch!r}")
    return net.to(dtype)


def init_params(arch, seed: int = 0) -> "OrderedDict[str, torch.Tensor]":
    """Named, ordered parameter/buffer tensors of a freshly initialised network."""
    return OrderedDict((k, v.detach().clone()) for k, v in build_network(arch, seed).state_dict().items())


def conv_layers(arch) -> list[dict]:
    """Per-conv metadata (name, weight shape, fan-in, init std) for a descriptor."""
    net = build_network(arch, 0)
    rows = []
    for name, m in net.named_modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            w = m.parametrizations.weight.original if hasattr(m, "parametrizations") else m.weight
            fan_in = (w.shape[0] if isinstance(m, nn.ConvTranspose2d) else w.shape[1]) * w[0, 0].numel()
            rows.append({"name": name, "shape": tuple(w.shape), "fan_in": fan_in,
                         "std": arch.init_gain / math.sqrt(fan_in)})
    return rows
