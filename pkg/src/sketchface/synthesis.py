"""Inference over a trained checkpoint pair: load, synthesize, sweep.

Per-image noise derives from (seed, image index), so a gallery of N images
is reproducible image by image regardless of batching; batch norm runs in
inference mode (running statistics), which keeps outputs independent of
batch composition.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .attributes import FACE_DIM, face_attribute_index, sketch_attributes
from .checkpoint import file_hash, load_checkpoint
from .config import TrainConfig
from .face import FaceGenerator
from .sketch import SketchGenerator
from .training import LATENT_DIM, NOISE_DIM, derive_seed

# Attribute weight sweep used by progression outputs and the UI strip.
PROGRESSION_WEIGHTS = (-1.0, -0.1, 0.1, 0.4, 0.7, 1.0)


@dataclass
class LoadedModel:
    """Frozen generator pair ready for synthesis."""

    sketch_gen: SketchGenerator
    face_gen: FaceGenerator
    config: TrainConfig
    model_hash: str
    stage1_path: Path
    stage2_path: Path

    @property
    def resolution(self) -> int:
        return self.config.scales[-1]


def load_model_pair(stage1_path: str | Path, stage2_path: str | Path) -> LoadedModel:
    """Load and pair the two stage checkpoints, verifying they belong together."""
    stage1_path, stage2_path = Path(stage1_path), Path(stage2_path)
    for path in (stage1_path, stage2_path):
        if not path.exists():
            raise FileNotFoundError(f"checkpoint not found: {path}")
    bundle1 = load_checkpoint(stage1_path)
    bundle2 = load_checkpoint(stage2_path)
    if bundle1.stage != "sketch" or bundle2.stage != "face":
        raise ValueError(
            f"expected a sketch-stage and a face-stage checkpoint, got "
            f"{bundle1.stage!r} and {bundle2.stage!r}"
        )
    h1 = file_hash(stage1_path)
    recorded = bundle2.extra.get("stage1_hash")
    if recorded is not None and recorded != h1:
        raise ValueError(
            f"stage-2 checkpoint {stage2_path} was trained against a different "
            f"stage-1 checkpoint (hash {recorded[:12]}..., given {h1[:12]}...)"
        )
    cfg = bundle1.config
    sketch_gen = SketchGenerator(base_channels=cfg.base_channels, scales=cfg.scales)
    face_gen = FaceGenerator(base_channels=cfg.base_channels, scales=cfg.scales)
    bundle1.restore_module("g_s", sketch_gen)
    bundle2.restore_module("g_f", face_gen)
    sketch_gen.eval()
    face_gen.eval()
    model_hash = hashlib.sha256((h1 + file_hash(stage2_path)).encode("ascii")).hexdigest()[:16]
    return LoadedModel(
        sketch_gen=sketch_gen,
        face_gen=face_gen,
        config=cfg,
        model_hash=model_hash,
        stage1_path=stage1_path,
        stage2_path=stage2_path,
    )


def _noise_rows(seed: int, indices: list[int]) -> tuple[torch.Tensor, ...]:
    """Per-image noise and reparameterization draws, one generator per index."""
    z_s, eps_s, z_f, eps_f = [], [], [], []
    for index in indices:
        gen = torch.Generator().manual_seed(derive_seed(seed, "image", index))
        z_s.append(torch.randn(NOISE_DIM, generator=gen))
        eps_s.append(torch.randn(LATENT_DIM, generator=gen))
        z_f.append(torch.randn(NOISE_DIM, generator=gen))
        eps_f.append(torch.randn(LATENT_DIM, generator=gen))
    return tuple(torch.stack(rows) for rows in (z_s, eps_s, z_f, eps_f))


def to_uint8(images: torch.Tensor) -> np.ndarray:
    """(B, 3, H, W) in [-1, 1] -> (B, H, W, 3) uint8."""
    arr = images.detach().clamp(-1.0, 1.0).numpy()
    arr = (arr + 1.0) / 2.0 * 255.0
    return np.round(arr).astype(np.uint8).transpose(0, 2, 3, 1)


def png_bytes(image: np.ndarray) -> bytes:
    """Encode one H x W x 3 uint8 image as PNG bytes (deterministic)."""
    buf = io.BytesIO()
    Image.fromarray(image, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def synthesize(
    model: LoadedModel,
    face_attrs: np.ndarray,
    seed: int,
    indices: list[int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Generate faces (and their sketches) for rows of attribute vectors.

    ``face_attrs`` is (B, 23) in [-1, 1]; row i uses noise derived from
    (seed, indices[i]), with indices defaulting to 0..B-1.  Returns
    (faces, sketches) as uint8 H x W x 3 stacks at the top scale.
    """
    face_attrs = np.asarray(face_attrs, dtype=np.float32)
    if face_attrs.ndim == 1:
        face_attrs = face_attrs[np.newaxis, :]
    if face_attrs.shape[1] != FACE_DIM:
        raise ValueError(f"attribute rows must have {FACE_DIM} entries, got {face_attrs.shape[1]}")
    batch = face_attrs.shape[0]
    if indices is None:
        indices = list(range(batch))
    if len(indices) != batch:
        raise ValueError("one noise index per attribute row required")
    y_f = torch.from_numpy(np.clip(face_attrs, -1.0, 1.0))
    y_s = torch.from_numpy(sketch_attributes(face_attrs).copy()).clamp(-1.0, 1.0)
    z_s, eps_s, z_f, eps_f = _noise_rows(seed, indices)
    with torch.no_grad():
        sketch_pyr, _ = model.sketch_gen(y_s, z_s, eps=eps_s)
        face_pyr, _ = model.face_gen(sketch_pyr[-1], y_f, z_f, eps=eps_f)
    return to_uint8(face_pyr[-1]), to_uint8(sketch_pyr[-1])


def progression(
    model: LoadedModel,
    base_attrs: np.ndarray,
    attribute_name: str,
    seed: int,
) -> tuple[np.ndarray, tuple[float, ...]]:
    """Sweep one attribute over the reference weights with noise held fixed.

    Returns (faces, weights): six images whose only difference is the value
    of ``attribute_name`` in the conditioning vector.
    """
    index = face_attribute_index(attribute_name)
    base_attrs = np.asarray(base_attrs, dtype=np.float32).reshape(-1)
    if base_attrs.shape[0] != FACE_DIM:
        raise ValueError(f"base attributes must have {FACE_DIM} entries")
    rows = np.repeat(base_attrs[np.newaxis, :], len(PROGRESSION_WEIGHTS), axis=0)
    rows[:, index] = PROGRESSION_WEIGHTS
    faces, _ = synthesize(model, rows, seed, indices=[0] * len(PROGRESSION_WEIGHTS))
    return faces, PROGRESSION_WEIGHTS
