"""Checkpoint bundles: model weights, optimizer state, step counter, seed.

Bundles serialize through the deterministic archive format, so saving the
same training state twice produces byte-identical files.  A stage-2 bundle
records the hash of the stage-1 checkpoint it was trained against, which
lets the synthesis entry points verify that a checkpoint pair belongs
together.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import archive
from .config import TrainConfig, config_from_text, config_to_text

KIND = "checkpoint"
VERSION = 1


def file_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _module_arrays(module: torch.nn.Module) -> dict[str, np.ndarray]:
    return {
        name: tensor.detach().cpu().numpy()
        for name, tensor in module.state_dict().items()
    }


def _optimizer_arrays(
    optimizer: torch.optim.Optimizer, module: torch.nn.Module
) -> dict[str, np.ndarray]:
    named = dict(module.named_parameters())
    by_id = {id(p): n for n, p in named.items()}
    arrays: dict[str, np.ndarray] = {}
    for group in optimizer.param_groups:
        for param in group["params"]:
            state = optimizer.state.get(param)
            if not state:
                continue
            name = by_id[id(param)]
            for key, value in state.items():
                tensor = value if torch.is_tensor(value) else torch.tensor(value)
                arrays[f"{name}::{key}"] = tensor.detach().cpu().numpy()
    return arrays


def _restore_optimizer(
    optimizer: torch.optim.Optimizer,
    module: torch.nn.Module,
    arrays: dict[str, np.ndarray],
    lr: float,
) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr
    grouped: dict[str, dict[str, np.ndarray]] = {}
    for key, value in arrays.items():
        name, _, state_key = key.partition("::")
        grouped.setdefault(name, {})[state_key] = value
    named = dict(module.named_parameters())
    for name, entries in grouped.items():
        param = named[name]
        optimizer.state[param] = {
            key: torch.from_numpy(value.copy())
            for key, value in entries.items()
        }


@dataclass
class CheckpointBundle:
    """Deserialized checkpoint contents."""

    stage: str
    step: int
    seed: int
    config: TrainConfig
    config_hash: str
    model_arrays: dict[str, dict[str, np.ndarray]]
    optim_arrays: dict[str, dict[str, np.ndarray]]
    optim_lr: dict[str, float]
    extra: dict = field(default_factory=dict)

    def restore_module(self, name: str, module: torch.nn.Module) -> None:
        arrays = self.model_arrays[name]
        state = {key: torch.from_numpy(value.copy()) for key, value in arrays.items()}
        module.load_state_dict(state)

    def restore_optimizer(
        self, name: str, optimizer: torch.optim.Optimizer, module: torch.nn.Module
    ) -> None:
        _restore_optimizer(optimizer, module, self.optim_arrays.get(name, {}), self.optim_lr[name])


def save_checkpoint(
    path: str | Path,
    stage: str,
    step: int,
    cfg: TrainConfig,
    models: dict[str, torch.nn.Module],
    optimizers: dict[str, torch.optim.Optimizer] | None = None,
    extra: dict | None = None,
) -> str:
    """Write a checkpoint atomically; returns the file's content hash."""
    from .config import config_hash as cfg_hash

    arrays: dict[str, np.ndarray] = {}
    for name, module in models.items():
        for key, value in _module_arrays(module).items():
            arrays[f"model/{name}/{key}"] = value
    lr_map: dict[str, float] = {}
    if optimizers:
        for name, optimizer in optimizers.items():
            if name not in models:
                raise KeyError(f"optimizer {name!r} has no matching model entry")
            lr_map[name] = float(optimizer.param_groups[0]["lr"])
            for key, value in _optimizer_arrays(optimizer, models[name]).items():
                arrays[f"optim/{name}/{key}"] = value
    meta = {
        "kind": KIND,
        "version": VERSION,
        "stage": stage,
        "step": int(step),
        "seed": int(cfg.seed),
        "config_text": config_to_text(cfg),
        "config_hash": cfg_hash(cfg),
        "model_names": sorted(models),
        "optim_lr": {k: repr(v) for k, v in sorted(lr_map.items())},
        "extra": extra or {},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    archive.write_archive(tmp, arrays, meta)
    os.replace(tmp, path)
    return file_hash(path)


def load_checkpoint(path: str | Path) -> CheckpointBundle:
    arrays, meta = archive.read_archive(path)
    if meta.get("kind") != KIND:
        raise ValueError(f"{path}: not a checkpoint file")
    if meta.get("version") != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
    model_arrays: dict[str, dict[str, np.ndarray]] = {}
    optim_arrays: dict[str, dict[str, np.ndarray]] = {}
    for key, value in arrays.items():
        section, _, rest = key.partition("/")
        name, _, leaf = rest.partition("/")
        if section == "model":
            model_arrays.setdefault(name, {})[leaf] = value
        elif section == "optim":
            optim_arrays.setdefault(name, {})[leaf] = value
        else:
            raise ValueError(f"{path}: unexpected entry {key!r}")
    return CheckpointBundle(
        stage=meta["stage"],
        step=meta["step"],
        seed=meta["seed"],
        config=config_from_text(meta["config_text"]),
        config_hash=meta["config_hash"],
        model_arrays=model_arrays,
        optim_arrays=optim_arrays,
        optim_lr={k: float(v) for k, v in meta["optim_lr"].items()},
        extra=meta.get("extra", {}),
    )
