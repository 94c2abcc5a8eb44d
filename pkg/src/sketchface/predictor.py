"""In-repo attribute predictor used by both evaluation metrics.

A small convolutional regressor maps a 64x64 face to 23 attribute scores in
[-1, 1].  Its penultimate feature layer doubles as the default embedding
for the Fréchet distance, so both metrics stay self-contained; the weights
hash is carried as a version tag because scores are only comparable within
one predictor version.
"""

from __future__ import annotations

import hashlib
import logging
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import archive
from .attributes import FACE_DIM
from .data import CuratedDataset

log = logging.getLogger(__name__)

KIND = "attribute-predictor"
VERSION = 1
FEATURE_DIM = 64


class AttributePredictor(nn.Module):
    """Conv backbone + two-layer head; forward returns scores in [-1, 1]."""

    def __init__(self, input_res: int = 64, out_dim: int = FACE_DIM):
        super().__init__()
        if input_res % 16:
            raise ValueError("input resolution must be divisible by 16")
        self.input_res = input_res
        self.out_dim = out_dim
        self.backbone = nn.Sequential(
            nn.Conv2d(3, 32, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(32, 64, 4, stride=2, padding=1),
            nn.BatchNorm2d(64),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(64, 128, 4, stride=2, padding=1),
            nn.BatchNorm2d(128),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(128, 128, 4, stride=2, padding=1),
            nn.BatchNorm2d(128),
            nn.LeakyReLU(0.2, inplace=True),
        )
        self.feature_fc = nn.Linear(128, FEATURE_DIM)
        self.head = nn.Linear(FEATURE_DIM, out_dim)

    def features(self, images: torch.Tensor) -> torch.Tensor:
        """Penultimate embedding, (B, 64); the default FID feature space."""
        if images.shape[-1] != self.input_res:
            raise ValueError(
                f"predictor expects {self.input_res}x{self.input_res} input, got {tuple(images.shape)}"
            )
        h = self.backbone(images)
        h = h.mean(dim=(2, 3))
        return F.relu(self.feature_fc(h))

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.head(self.features(images)))

    @property
    def version(self) -> str:
        """Weights hash; scores are comparable only within one version."""
        digest = hashlib.sha256()
        for name, tensor in sorted(self.state_dict().items()):
            digest.update(name.encode("utf-8"))
            digest.update(tensor.detach().cpu().numpy().tobytes())
        return digest.hexdigest()[:16]


def balanced_accuracy(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean over attributes of (TPR + TNR) / 2 at the sign threshold.

    Attributes with only one class present in the labels fall back to plain
    accuracy for that attribute.
    """
    predicted = np.where(scores >= 0, 1.0, -1.0)
    accs = []
    for j in range(labels.shape[1]):
        pos = labels[:, j] > 0
        neg = ~pos
        if pos.any() and neg.any():
            tpr = (predicted[pos, j] == 1.0).mean()
            tnr = (predicted[neg, j] == -1.0).mean()
            accs.append((tpr + tnr) / 2.0)
        else:
            accs.append((predicted[:, j] == labels[:, j]).mean())
    return float(np.mean(accs))


def _image_tensor(stack: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(stack.transpose(0, 3, 1, 2)))


def train_attribute_predictor(
    dataset: CuratedDataset,
    epochs: int = 30,
    batch_size: int = 16,
    lr: float = 2e-3,
    seed: int = 0,
    holdout_fraction: float = 0.25,
) -> tuple[AttributePredictor, dict]:
    """Fit the predictor on a curated dataset; returns (model, report).

    The report carries held-out balanced accuracy and the version tag.
    Deterministic under a fixed seed.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    res = dataset.scales[-1]
    images = _image_tensor(dataset.faces[res])
    labels = torch.from_numpy(dataset.y_f.copy())

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    n_holdout = max(1, int(len(dataset) * holdout_fraction)) if len(dataset) > 1 else 0
    holdout_idx = order[:n_holdout]
    train_idx = order[n_holdout:]
    if len(train_idx) == 0:
        raise ValueError("dataset too small for the requested holdout fraction")

    torch.manual_seed(seed)
    model = AttributePredictor(input_res=res)
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    model.train()
    for epoch in range(epochs):
        epoch_order = rng.permutation(len(train_idx))
        for lo in range(0, len(train_idx), batch_size):
            idx = train_idx[epoch_order[lo : lo + batch_size]]
            if len(idx) < 2:
                continue
            idx_t = torch.from_numpy(idx.copy())
            optimizer.zero_grad(set_to_none=True)
            loss = F.mse_loss(model(images[idx_t]), labels[idx_t])
            loss.backward()
            optimizer.step()

    model.eval()
    report = {"version": model.version, "epochs": epochs, "train_samples": len(train_idx)}
    if n_holdout:
        with torch.no_grad():
            scores = model(images[torch.from_numpy(holdout_idx.copy())]).numpy()
        report["holdout_balanced_accuracy"] = balanced_accuracy(
            scores, dataset.y_f[holdout_idx]
        )
        log.info("predictor holdout balanced accuracy: %.3f", report["holdout_balanced_accuracy"])
    return model, report


def save_predictor(model: AttributePredictor, path: str | Path) -> None:
    arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    meta = {
        "kind": KIND,
        "version": VERSION,
        "input_res": model.input_res,
        "out_dim": model.out_dim,
        "weights_version": model.version,
    }
    archive.write_archive(path, arrays, meta)


def load_predictor(path: str | Path) -> AttributePredictor:
    arrays, meta = archive.read_archive(path)
    if meta.get("kind") != KIND:
        raise ValueError(f"{path}: not an attribute predictor file")
    model = AttributePredictor(input_res=meta["input_res"], out_dim=meta["out_dim"])
    model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in arrays.items()})
    model.eval()
    return model
