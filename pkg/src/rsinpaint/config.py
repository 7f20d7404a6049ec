"""Flat, typed key-value run configuration.

Files are flat TOML (``key = value`` lines, no tables). Unknown keys and
wrongly typed values are rejected at parse time; ``--set key=value``
overrides use the same value syntax.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .imaging import CannyConfig
from .maskgen import MASK_KINDS, MaskSpec
from .pipeline import ArchConfig, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    data_dir: str = ""
    run_dir: str = "runs/rsinpaint"
    seed: int = 0
    use_splits: bool = True
    tile: int = 0
    image_size: int = 256

    canny_sigma: float = 2.0
    canny_low: float = 0.1
    canny_high: float = 0.2

    mask_kind: str = "irregular"
    mask_min_frac: float | None = None
    mask_max_frac: float | None = None
    mask_source: str = "procedural"
    fixed_masks: bool = False

    gen_width: int = 64
    n_res: int = 8
    disc_width: int = 64
    cbam: bool = True
    cbam_reduction: int = 16
    attention: bool = True
    skip: bool = True
    refine_residual: bool = True

    lambda_l1: float = 1.0
    lambda_perc: float = 1.0
    lambda_style: float = 1.0
    fm_weight: float = 1.0

    lr_g: float = 1e-3
    lr_d: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.9
    adam_eps: float = 1e-8
    batch_size: int = 8
    steps_edge: int = 1000
    steps_colour: int = 1000
    steps_global: int = 1000
    jigsaw: bool = False
    jigsaw_grid: int = 4
    jigsaw_steps: int = 0
    checkpoint_every: int = 0
    sample_every: int = 0

    extractor: str = "vgg19"
    extractor_path: str = ""

    eval_split: str = "test"

    def __post_init__(self):
        if self.mask_kind not in MASK_KINDS:
            raise ConfigError(f"mask_kind must be one of {MASK_KINDS}, got {self.mask_kind!r}")
        if self.extractor not in ("vgg19", "tiny", "identity"):
            raise ConfigError(f"unknown extractor {self.extractor!r}")
        if self.eval_split not in ("train", "val", "test"):
            raise ConfigError(f"unknown eval_split {self.eval_split!r}")
        for name in ("image_size", "gen_width", "disc_width", "batch_size", "cbam_reduction", "jigsaw_grid"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("tile", "n_res", "steps_edge", "steps_colour", "steps_global",
                     "jigsaw_steps", "checkpoint_every", "sample_every"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.image_size % 8:
            raise ConfigError("image_size must be divisible by 8")
        # delegate the remaining checks to the component constructors
        try:
            self.canny()
            self.mask_spec()
            self.arch().archs()
            self.train()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def canny(self) -> CannyConfig:
        return CannyConfig(self.canny_sigma, self.canny_low, self.canny_high)

    def mask_spec(self, seed: int | None = None) -> MaskSpec:
        return MaskSpec(self.mask_kind, self.mask_min_frac, self.mask_max_frac,
                        self.seed if seed is None else seed, self.mask_source)

    def arch(self) -> ArchConfig:
        return ArchConfig(self.image_size, self.gen_width, self.n_res, self.disc_width,
                          self.cbam, self.cbam_reduction, self.attention, self.skip, self.refine_residual)

    def train(self) -> TrainConfig:
        return TrainConfig(
            lr_g=self.lr_g, lr_d=self.lr_d, beta1=self.beta1, beta2=self.beta2, eps=self.adam_eps,
            batch_size=self.batch_size, steps_edge=self.steps_edge, steps_colour=self.steps_colour,
            steps_global=self.steps_global,
            lambdas=(self.lambda_l1, self.lambda_perc, self.lambda_style), fm_weight=self.fm_weight,
            seed=self.seed, jigsaw=self.jigsaw, jigsaw_grid=self.jigsaw_grid,
            jigsaw_steps=self.jigsaw_steps, checkpoint_every=self.checkpoint_every,
            sample_every=self.sample_every,
        )

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @property
    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def dumps(self) -> str:
        return "".join(f"{k} = {_toml_value(v)}\n" for k, v in self.to_dict().items())

    def write(self, path) -> None:
        Path(path).write_text(self.dumps())


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    return json.dumps(str(v))


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(key, value):
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    default = _FIELDS[key].default
    kind = _FIELDS[key].type
    if isinstance(value, dict) or isinstance(value, list):
        raise ConfigError(f"{key}: nested values are not allowed in a flat config")
    if "float" in str(kind):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected a string, got {value!r}")
    return value


def parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = (s.strip() for s in text.split("=", 1))
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def load_config(path=None, overrides=()) -> RunConfig:
    values = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for k, v in raw.items():
            values[k] = _coerce(k, v)
    for text in overrides:
        k, v = parse_override(text)
        values[k] = _coerce(k, v)
    return RunConfig(**values)
