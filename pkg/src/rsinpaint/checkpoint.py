"""Self-describing checkpoint container.

A safetensors file: named little-endian float32 tensors plus string metadata
holding the architecture descriptors, their hash, and the run-config hash.
The same container stores feature-extractor weights.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch
from safetensors import SafetensorError, safe_open
from safetensors.torch import load_file, save_file

from .nets import arch_from_dict, arch_hash, arch_to_dict

FORMAT = "rsinpaint-checkpoint-1"


class CheckpointError(OSError):
    pass


def save_tensors(tensors: dict, path, metadata: dict | None = None) -> None:
    meta = {"format": FORMAT}
    meta.update({k: v if isinstance(v, str) else json.dumps(v, sort_keys=True)
                 for k, v in (metadata or {}).items()})
    data = {k: v.detach().to(torch.float32).contiguous().cpu() for k, v in tensors.items()}
    save_file(data, str(path), metadata=meta)


def load_tensors(path):
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with safe_open(str(path), framework="pt") as fh:
            meta = fh.metadata() or {}
        tensors = load_file(str(path))
    except (SafetensorError, OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if meta.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} container")
    return tensors, meta


def save_networks(nets: dict, path, config_hash: str = "", extra: dict | None = None) -> None:
    """Write several networks (name -> module with ``.arch``) into one container."""
    tensors = {}
    archs = {}
    for name, net in nets.items():
        archs[name] = net.arch
        for k, v in net.state_dict().items():
            tensors[f"{name}/{k}"] = v
    meta = {
        "archs": {k: arch_to_dict(a) for k, a in archs.items()},
        "arch_hash": arch_hash(archs),
        "config_hash": config_hash,
    }
    meta.update(extra or {})
    save_tensors(tensors, path, meta)


def read_header(path) -> dict:
    _, meta = load_tensors(path)
    return decode_meta(meta)


def decode_meta(meta: dict) -> dict:
    out = dict(meta)
    for key in ("archs", "config"):
        if key in out:
            out[key] = json.loads(out[key])
    return out


def load_networks(path, dtype=torch.float32):
    """Rebuild every network stored in a container; returns (nets, header)."""
    from .nets import build_network

    tensors, meta = load_tensors(path)
    header = decode_meta(meta)
    if "archs" not in header:
        raise CheckpointError(f"{path} carries no architecture descriptors")
    archs = {name: arch_from_dict(d) for name, d in header["archs"].items()}
    if arch_hash(archs) != header.get("arch_hash"):
        raise CheckpointError(f"{path}: architecture hash mismatch")
    nets = {}
    for name, arch in archs.items():
        net = build_network(arch, 0, dtype)
        prefix = f"{name}/"
        state = {k[len(prefix):]: v.to(dtype) for k, v in tensors.items() if k.startswith(prefix)}
        try:
            net.load_state_dict(state)
        except RuntimeError as exc:
            raise CheckpointError(f"{path}: tensors for {name} do not fit its architecture") from exc
        nets[name] = net
    return nets, header
