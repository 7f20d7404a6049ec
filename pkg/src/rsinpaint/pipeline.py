"""Three-stage inpainting: edge completion, colour filling, global refinement.

Edge stage:   C_pred = G1(gray * (1-M), C_gt * (1-M), M)
Colour stage: I_pred = G2(I_gt * (1-M), C_comp),  C_comp = C_gt*(1-M) + thr(C_pred)*M
Global stage: I_refined = G3(I_comp, I_gt * (1-M)), I_comp = I_gt*(1-M) + I_pred*M

Networks work in the signed range; edge maps and masks stay in {0, 1}.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from . import nets as N
from .checkpoint import load_networks, save_networks
from .dataset import ExamplePool, TrainingExample, batch_iterator, derive_seed
from .imaging import CannyConfig, Image, Mask, canny_edges, compose, save_image, to_grayscale
from .losses import (LossBundle, NonFiniteLossError, adversarial_loss, feature_matching_loss,
                     l1_masked, perceptual_loss, style_loss, total_loss)

log = logging.getLogger(__name__)

STAGES = ("edge", "colour", "global")
METRIC_COLUMNS = ("step", "stage", "adv", "l1", "perc", "style", "fm", "total")
NET_NAMES = ("g1", "d1", "g2", "d2", "g3", "d3")


@dataclass(frozen=True)
class ArchConfig:
    image_size: int = 256
    gen_width: int = 64
    n_res: int = 8
    disc_width: int = 64
    cbam: bool = True
    cbam_reduction: int = 16
    attention: bool = True
    skip: bool = True
    refine_residual: bool = True

    def archs(self) -> dict:
        g = dict(width=self.gen_width, n_res=self.n_res, cbam=self.cbam,
                 cbam_reduction=self.cbam_reduction, attention=self.attention, skip=self.skip)
        d = dict(width=self.disc_width, input_size=self.image_size)
        return {"g1": N.g1_arch(**g), "d1": N.d1_arch(**d),
                "g2": N.g2_arch(**g), "d2": N.d2_arch(**d),
                "g3": N.g3_arch(residual=self.refine_residual, **g), "d3": N.d3_arch(**d)}


@dataclass(frozen=True)
class TrainConfig:
    lr_g: float = 1e-3
    lr_d: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.9
    eps: float = 1e-8
    batch_size: int = 8
    steps_edge: int = 1000
    steps_colour: int = 1000
    steps_global: int = 1000
    stages: tuple = STAGES
    lambdas: tuple = (1.0, 1.0, 1.0)
    fm_weight: float = 1.0
    seed: int = 0
    jigsaw: bool = False
    jigsaw_grid: int = 4
    jigsaw_steps: int = 0
    checkpoint_every: int = 0
    sample_every: int = 0

    def __post_init__(self):
        if self.lr_g < 0 or self.lr_d < 0:
            raise ValueError("learning rates must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if tuple(self.stages) != tuple(s for s in STAGES if s in self.stages):
            raise ValueError(f"stages must follow the order {STAGES}, got {self.stages}")

    def steps(self, stage: str) -> int:
        return {"edge": self.steps_edge, "colour": self.steps_colour, "global": self.steps_global}[stage]


class InpaintingModel:
    """The six networks plus the configuration they were built under."""

    def __init__(self, networks: dict, config: dict | None = None):
        missing = [n for n in NET_NAMES if n not in networks]
        if missing:
            raise ValueError(f"model lacks networks {missing}")
        self.nets = dict(networks)
        self.config = dict(config or {})

    def __getattr__(self, name):
        if name in NET_NAMES:
            return self.__dict__["nets"][name]
        raise AttributeError(name)

    @classmethod
    def create(cls, arch: ArchConfig = ArchConfig(), seed: int = 0, config: dict | None = None):
        nets = {name: N.build_network(a, derive_seed(seed, "init", name))
                for name, a in arch.archs().items()}
        cfg = {"arch": asdict(arch)}
        cfg.update(config or {})
        return cls(nets, cfg)

    @property
    def archs(self) -> dict:
        return {n: net.arch for n, net in self.nets.items()}

    @property
    def arch_hash(self) -> str:
        return N.arch_hash(self.archs)

    def state(self) -> dict:
        return {f"{n}/{k}": v.detach().clone() for n, net in self.nets.items()
                for k, v in net.state_dict().items()}

    def canny(self) -> CannyConfig:
        c = self.config.get("canny", {})
        return CannyConfig(**c) if c else CannyConfig()

    def save(self, path, config_hash: str = "") -> None:
        save_networks(self.nets, path, config_hash or self.config.get("config_hash", ""),
                      extra={"config": self.config})

    @classmethod
    def load(cls, path) -> "InpaintingModel":
        nets, header = load_networks(path)
        return cls(nets, header.get("config", {}))


# --- tensor plumbing ------------------------------------------------------------

def image_tensor(img: Image, range_tag: str = "signed") -> torch.Tensor:
    """H x W x C image -> 1 x C x H x W tensor in ``range_tag`` (edges untouched)."""
    data = img.to_range(range_tag).data if img.kind != "edge" else img.data
    return torch.from_numpy(np.ascontiguousarray(data.transpose(2, 0, 1)))[None]


def mask_tensor(mask: Mask) -> torch.Tensor:
    return torch.from_numpy(mask.data)[None, None]


def tensor_image(t: torch.Tensor, range_tag: str, kind: str) -> Image:
    arr = t.detach().to(torch.float32).cpu().numpy()[0].transpose(1, 2, 0)
    lo, hi = (0.0, 1.0) if range_tag == "unit" else (-1.0, 1.0)
    return Image(np.clip(arr, lo, hi), range_tag, kind)


def collate(examples: list[TrainingExample]) -> dict:
    return {
        "img": torch.cat([image_tensor(e.i_gt, "signed") for e in examples]),
        "gray": torch.cat([image_tensor(e.i_gray, "signed") for e in examples]),
        "edge": torch.cat([image_tensor(e.c_gt) for e in examples]),
        "mask": torch.cat([mask_tensor(e.mask) for e in examples]),
    }


def masked(x, mask):
    return x * (1.0 - mask)


def composite(pred, gt, mask):
    return torch.where(mask > 0.5, pred, gt)


def g1_inputs(gray, edge, mask):
    return torch.cat([masked(gray, mask), masked(edge, mask), mask], dim=1)


def harden_edges(c_pred, edge, mask):
    return composite((c_pred >= 0.5).to(edge.dtype), edge, mask)


def g2_inputs(img, c_comp, mask):
    return torch.cat([masked(img, mask), c_comp], dim=1)


def g3_inputs(i_comp, img, mask):
    return torch.cat([i_comp, masked(img, mask)], dim=1)


@torch.no_grad()
def forward_chain(model: InpaintingModel, batch: dict, upto: str = "global") -> dict:
    """Run the frozen chain on a collated batch; returns every intermediate."""
    img, gray, edge, mask = batch["img"], batch["gray"], batch["edge"], batch["mask"]
    out = {}
    out["c_pred"] = model.g1(g1_inputs(gray, edge, mask))
    out["c_comp"] = harden_edges(out["c_pred"], edge, mask)
    if upto == "edge":
        return out
    out["i_pred"] = model.g2(g2_inputs(img, out["c_comp"], mask))
    out["i_comp"] = composite(out["i_pred"], img, mask)
    if upto == "colour":
        return out
    out["i_refined"] = model.g3(g3_inputs(out["i_comp"], img, mask))
    out["final"] = composite(out["i_refined"], img, mask)
    return out


# --- single-example operations --------------------------------------------------

def predict_edges(ex: TrainingExample, g1) -> Image:
    """Soft edge probabilities in (0, 1) for the whole frame (gray kind, unit range)."""
    with torch.no_grad():
        c = g1(g1_inputs(image_tensor(ex.i_gray), image_tensor(ex.c_gt), mask_tensor(ex.mask)))
    return tensor_image(c, "unit", "gray")


def compose_edges(c_pred: Image, c_gt: Image, mask: Mask) -> Image:
    hard = Image((c_pred.data >= 0.5).astype(np.float32), c_gt.range_tag, "edge")
    return compose(hard, c_gt, mask)


def fill_color(ex: TrainingExample, c_comp: Image, g2) -> Image:
    with torch.no_grad():
        out = g2(g2_inputs(image_tensor(ex.i_gt), image_tensor(c_comp), mask_tensor(ex.mask)))
    return tensor_image(out, "signed", "rgb")


def refine(i_comp: Image, i_gt_masked: Image, g3) -> Image:
    if i_comp.hw != i_gt_masked.hw:
        raise ValueError("refine inputs differ in size")
    x = torch.cat([image_tensor(i_comp), image_tensor(i_gt_masked)], dim=1)
    with torch.no_grad():
        out = g3(x)
    return tensor_image(out, "signed", "rgb")


def inpaint(image: Image, mask: Mask, model: InpaintingModel, canny: CannyConfig | None = None) -> Image:
    """Full chain; known pixels of the result are copied from ``image`` verbatim."""
    if image.kind != "rgb":
        raise ValueError("inpaint needs an rgb image")
    h, w = image.hw
    if h % 8 or w % 8:
        raise ValueError(f"image size {h}x{w} must be divisible by 8")
    if tuple(mask.shape) != (h, w):
        raise ValueError("mask and image sizes differ")
    if not mask.data.any():
        return image
    canny = canny or model.canny()
    gray = to_grayscale(image)
    edge = canny_edges(gray, canny.sigma, canny.low, canny.high)
    batch = {"img": image_tensor(image), "gray": image_tensor(gray),
             "edge": image_tensor(edge), "mask": mask_tensor(mask)}
    out = forward_chain(model, batch)
    refined = tensor_image(out["i_refined"], "signed", "rgb").to_range(image.range_tag)
    return compose(refined, image, mask)


# --- training -------------------------------------------------------------------

def _jigsaw_tensor(x, grid, perm):
    n, c, h, w = x.shape
    th, tw = h // grid, w // grid
    tiles = x.reshape(n, c, grid, th, grid, tw).permute(0, 1, 2, 4, 3, 5).reshape(n, c, grid * grid, th, tw)
    tiles = tiles[:, :, perm]
    return tiles.reshape(n, c, grid, grid, th, tw).permute(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)


def _stage_nets(model, stage):
    return {"edge": ("g1", "d1"), "colour": ("g2", "d2"), "global": ("g3", "d3")}[stage]


def _stage_losses(stage, model, batch, cfg: TrainConfig, extractor, jig_perm=None):
    """One discriminator loss and the generator LossBundle for a batch."""
    img, gray, edge, mask = batch["img"], batch["gray"], batch["edge"], batch["mask"]
    g_name, d_name = _stage_nets(model, stage)
    g, d = model.nets[g_name], model.nets[d_name]

    if stage == "edge":
        x = g1_inputs(gray, edge, mask)
        if jig_perm is not None:
            x = _jigsaw_tensor(x, cfg.jigsaw_grid, jig_perm)
        fake = g(x)
        cond, real = gray, edge
    elif stage == "colour":
        up = forward_chain(model, batch, upto="edge")
        cond = up["c_comp"]
        fake = g(g2_inputs(img, cond, mask))
        real = img
    else:
        up = forward_chain(model, batch, upto="colour")
        cond = up["i_comp"]
        fake = g(g3_inputs(cond, img, mask))
        real = img

    d_real, _ = d(torch.cat([real, cond], dim=1))
    d_fake, _ = d(torch.cat([fake.detach(), cond], dim=1))
    d_loss = adversarial_loss(d_real, d_fake, "discriminator")

    def g_bundle():
        g_fake, fake_feats = d(torch.cat([fake, cond], dim=1))
        adv = adversarial_loss(None, g_fake, "generator")
        if stage == "edge":
            with torch.no_grad():
                _, real_feats = d(torch.cat([real, cond], dim=1))
            fm = feature_matching_loss(real_feats, fake_feats)
            return total_loss(adv, fm=fm, lambdas=cfg.lambdas, fm_weight=cfg.fm_weight)
        l1 = l1_masked(fake, real, mask)
        perc = perceptual_loss(fake, real, extractor)
        style = style_loss(composite(fake, real, mask), real, extractor)
        return total_loss(adv, l1=l1, perc=perc, style=style, lambdas=cfg.lambdas)

    return d_loss, g_bundle, fake


def _dump_batch(run_dir, stage, step, batch):
    if run_dir is None:
        return None
    path = Path(run_dir) / "diagnostics" / f"nonfinite-{stage}-step-{step}.npz"
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **{k: v.cpu().numpy() for k, v in batch.items()})
    return path


def _save_sample(run_dir, stage, step, batch, fake):
    out_dir = Path(run_dir) / "samples"
    out_dir.mkdir(parents=True, exist_ok=True)
    mask = batch["mask"][:1]
    if stage == "edge":
        gt, corrupt, pred = batch["edge"][:1], masked(batch["edge"][:1], mask), fake[:1]
        to_img = lambda t: tensor_image(t.repeat(1, 3, 1, 1) * 2 - 1, "signed", "rgb")
    else:
        gt, corrupt, pred = batch["img"][:1], masked(batch["img"][:1], mask), fake[:1]
        to_img = lambda t: tensor_image(t, "signed", "rgb")
    strip = np.concatenate([to_img(t).data for t in (gt, corrupt, pred.detach())], axis=1)
    save_image(Image(strip, "signed", "rgb"), out_dir / f"{stage}-step-{step}.png")


def train_stage(stage: str, pool: ExamplePool, model: InpaintingModel, cfg: TrainConfig,
                extractor=None, run_dir=None, metrics_path=None):
    """Alternating D/G Adam updates for one stage; upstream generators stay frozen.

    Returns (model, rows) where ``rows`` holds one metrics dict per step.
    """
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    steps = cfg.steps(stage)
    rows = []
    if steps == 0:
        return model, rows
    if stage != "edge" and extractor is None:
        raise ValueError(f"the {stage} stage needs a feature extractor")

    g_name, d_name = _stage_nets(model, stage)
    g, d = model.nets[g_name], model.nets[d_name]
    for name, net in model.nets.items():
        net.requires_grad_(name in (g_name, d_name))
        net.train(name in (g_name, d_name))
    opt_g = torch.optim.Adam(g.parameters(), lr=cfg.lr_g, betas=(cfg.beta1, cfg.beta2), eps=cfg.eps)
    opt_d = torch.optim.Adam(d.parameters(), lr=cfg.lr_d, betas=(cfg.beta1, cfg.beta2), eps=cfg.eps)
    torch.manual_seed(derive_seed(cfg.seed, "torch", stage))
    jig_rng = np.random.default_rng(derive_seed(cfg.seed, "jigsaw"))
    data_seed = derive_seed(cfg.seed, "order", stage)

    step, epoch = 0, 0
    writer = _MetricsWriter(metrics_path)
    try:
        while step < steps:
            for idx in batch_iterator(list(range(len(pool))), cfg.batch_size, data_seed, epoch):
                if step >= steps:
                    break
                step += 1
                batch = collate([pool.get(i, epoch) for i in idx])
                jig = None
                if stage == "edge" and cfg.jigsaw and step <= (cfg.jigsaw_steps or steps):
                    jig = torch.from_numpy(jig_rng.permutation(cfg.jigsaw_grid ** 2))
                d_loss, g_bundle, fake = _stage_losses(stage, model, batch, cfg, extractor, jig)
                if not torch.isfinite(d_loss):
                    where = _dump_batch(run_dir, stage, step, batch)
                    raise NonFiniteLossError(f"{stage} step {step}: discriminator loss is not finite; batch dumped to {where}")
                opt_d.zero_grad(set_to_none=True)
                d_loss.backward()
                opt_d.step()

                try:
                    bundle = g_bundle()
                except NonFiniteLossError as exc:
                    where = _dump_batch(run_dir, stage, step, batch)
                    raise NonFiniteLossError(f"{stage} step {step}: {exc}; batch dumped to {where}") from exc
                opt_g.zero_grad(set_to_none=True)
                bundle.total.backward()
                opt_g.step()

                row = {"step": step, "stage": stage}
                row.update({k: v for k, v in bundle.as_row().items() if k in METRIC_COLUMNS})
                rows.append(row)
                writer.write(row)
                if run_dir is not None and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
                    save_checkpoint(model, run_dir, stage, step)
                if run_dir is not None and cfg.sample_every and step % cfg.sample_every == 0:
                    _save_sample(run_dir, stage, step, batch, fake)
            epoch += 1
    finally:
        writer.close()
        for net in model.nets.values():
            net.requires_grad_(True)
            net.eval()
    if run_dir is not None:
        save_checkpoint(model, run_dir, stage, step)
    log.info("stage %s finished after %d steps", stage, step)
    return model, rows


class _MetricsWriter:
    def __init__(self, path):
        self.fh = None
        if path is not None:
            path = Path(path)
            new = not path.exists()
            self.fh = open(path, "a", newline="")
            self.w = csv.DictWriter(self.fh, fieldnames=METRIC_COLUMNS)
            if new:
                self.w.writeheader()

    def write(self, row):
        if self.fh:
            self.w.writerow({k: ("" if row.get(k) is None else row[k]) for k in METRIC_COLUMNS})

    def close(self):
        if self.fh:
            self.fh.close()


def save_checkpoint(model, run_dir, stage, step) -> Path:
    path = Path(run_dir) / "checkpoints" / f"stage-{stage}-step-{step}.ckpt"
    path.parent.mkdir(parents=True, exist_ok=True)
    model.save(path)
    return path


def train_full(pool: ExamplePool, cfg: TrainConfig, model: InpaintingModel | None = None,
               arch: ArchConfig = ArchConfig(), extractor=None, run_dir=None,
               config_snapshot: dict | None = None):
    """Train edge -> colour -> global in order; returns (model, all metric rows)."""
    if model is None:
        model = InpaintingModel.create(arch, derive_seed(cfg.seed, "model"))
    model.config.update({"train": _jsonable(asdict(cfg)), "canny": asdict(pool.canny)})
    model.config.update(config_snapshot or {})
    metrics_path = Path(run_dir) / "metrics.csv" if run_dir is not None else None
    rows = []
    for stage in cfg.stages:
        model, stage_rows = train_stage(stage, pool, model, cfg, extractor, run_dir, metrics_path)
        rows.extend(stage_rows)
    return model, rows


def _jsonable(d):
    return json.loads(json.dumps(d, default=list))
