"""Training configuration, dataset profiles, and the key=value config file."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path

DATASETS = ("celeba", "lfwa", "celebahq")


@dataclass
class TrainConfig:
    """Hyperparameters for a training run.

    Dataset profiles bake in the published schedules; see ``for_dataset``.
    ``pretrain_epochs`` > 0 trains stage 1 alone first (the celebahq recipe),
    after which stage 2 trains against the frozen sketch generator.
    ``d_base_channels`` widens or narrows the discriminators; 0 keeps the
    default of twice the generator width (the 64..512 chain at full scale).
    ``d_lr_scale`` multiplies the discriminator learning rate relative to the
    generator's (two time-scale updates); 1.0 keeps the rates matched.
    """

    dataset: str = "celeba"
    batch_size: int = 40
    lr_stage1: float = 2e-4
    lr_stage2: float = 1e-4
    epochs: int = 20
    freeze_epochs: int = 10
    decay_fraction: float = 0.1
    lambda_s: float = 0.01
    lambda_f: float = 0.01
    scales: tuple[int, ...] = (16, 32, 64)
    seed: int = 0
    base_channels: int = 32
    d_base_channels: int = 0
    d_lr_scale: float = 1.0
    pretrain_epochs: int = 0
    stop_sketch_gradient: bool = False
    ground_truth_sketch: bool = False
    saturating_generator_loss: bool = False
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ValueError(f"unknown dataset {self.dataset!r}; expected one of {DATASETS}")
        self.scales = tuple(int(s) for s in self.scales)
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch statistics need it)")
        if self.d_base_channels < 0:
            raise ValueError("d_base_channels must be >= 0 (0 means twice base_channels)")
        if self.d_lr_scale <= 0:
            raise ValueError("d_lr_scale must be positive")

    @classmethod
    def for_dataset(cls, dataset: str, **overrides) -> "TrainConfig":
        """Published per-dataset defaults, overridable field by field."""
        profiles = {
            "celeba": {},
            "lfwa": {"epochs": 200, "freeze_epochs": 100, "decay_fraction": 0.01},
            "celebahq": {
                "batch_size": 16,
                "scales": (64, 128, 256),
                "pretrain_epochs": 20,
                "stop_sketch_gradient": True,
            },
        }
        if dataset not in profiles:
            raise ValueError(f"unknown dataset {dataset!r}; expected one of {DATASETS}")
        fields = {"dataset": dataset, **profiles[dataset], **overrides}
        return cls(**fields)

    @classmethod
    def smoke(cls, **overrides) -> "TrainConfig":
        """Desk-scale profile: tiny widths, hot constant learning rate.

        125 epochs of 16 samples at batch 4 is exactly 500 steps.
        """
        fields = {
            "dataset": "celeba",
            "batch_size": 4,
            "lr_stage1": 2e-3,
            "lr_stage2": 2e-3,
            "epochs": 125,
            "freeze_epochs": 125,
            "decay_fraction": 0.0,
            "base_channels": 8,
            "d_base_channels": 8,
            **overrides,
        }
        return cls(**fields)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(text: str, field_type) -> object:
    text = text.strip()
    if field_type is bool:
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if field_type is int:
        return int(text)
    if field_type is float:
        return float(text)
    if field_type is str:
        return text
    # the only remaining field type is the scales tuple
    return tuple(int(v) for v in text.split(",") if v.strip())


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
_PYTHON_TYPES = {
    "str": str,
    "int": int,
    "float": float,
    "bool": bool,
    "tuple[int, ...]": tuple,
}


def config_to_text(cfg: TrainConfig) -> str:
    """Render the config as the canonical key=value document."""
    lines = ["# training configuration"]
    for field in dataclasses.fields(TrainConfig):
        lines.append(f"{field.name} = {_format_value(getattr(cfg, field.name))}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> TrainConfig:
    """Parse a key=value document; unknown keys are hard errors."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno} is not key = value: {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ValueError(f"unknown config key {key!r} on line {lineno}")
        values[key] = _parse_value(value, _PYTHON_TYPES[str(_FIELD_TYPES[key])])
    return TrainConfig(**values)


def save_config(cfg: TrainConfig, path: str | Path) -> None:
    Path(path).write_text(config_to_text(cfg))


def load_config(path: str | Path) -> TrainConfig:
    return config_from_text(Path(path).read_text())


def config_hash(cfg: TrainConfig) -> str:
    """Stable hash of the canonical config text."""
    return hashlib.sha256(config_to_text(cfg).encode("utf-8")).hexdigest()
