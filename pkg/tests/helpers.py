"""Shared test utilities: synthetic dataset construction and small helpers.

The synthetic portraits encode each curated attribute as the brightness of
one 8x8-pixel cell on an 8x8 grid, so a small predictor can recover the
vector from pixels alone and cell borders give the sketch filter real edges
to find.  Cells are piecewise constant (no per-pixel noise): sample-to-sample
variety comes from a small per-cell brightness offset, which keeps every
portrait inside the family a coarse-to-fine generator can actually render.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from PIL import Image

from sketchface.attributes import FACE_ATTRIBUTES, FULL_ATTRIBUTES
from sketchface.data import CuratedDataset

GRID = 8
CELL = 8
SIZE = GRID * CELL
BACKGROUND = 0.55
CONTRAST = 0.28
OFFSET_AMP = 0.05


def synthetic_face(y_f: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Attribute-coded portrait in [0, 1], SIZE x SIZE x 3.

    The first 23 grid cells (row-major) carry one curated attribute each as
    +/- CONTRAST around the background; two spare cells carry offset only.
    """
    y_f = np.asarray(y_f, dtype=np.float64)
    img = np.full((SIZE, SIZE, 3), BACKGROUND)
    offsets = rng.uniform(-OFFSET_AMP, OFFSET_AMP, size=25)
    for k in range(25):
        r, c = divmod(k, GRID)
        value = CONTRAST * y_f[k] if k < len(y_f) else 0.0
        block = BACKGROUND + value + offsets[k]
        img[r * CELL : (r + 1) * CELL, c * CELL : (c + 1) * CELL, :] = block
    return np.clip(img, 0.0, 1.0)


def build_synthetic_root(root: Path, n: int = 96, seed: int = 2024) -> Path:
    """Write a CelebA-layout dataset of attribute-coded portraits."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    full = rng.choice(np.array([-1.0, 1.0]), size=(n, len(FULL_ATTRIBUTES)))
    face_idx = [FULL_ATTRIBUTES.index(name) for name in FACE_ATTRIBUTES]
    names = [f"img_{i:03d}.png" for i in range(n)]
    for i, name in enumerate(names):
        img = synthetic_face(full[i, face_idx], np.random.default_rng(seed * 7919 + i))
        pixels = np.round(img * 255.0).astype(np.uint8)
        Image.fromarray(pixels, mode="RGB").save(root / "images" / name)

    with open(root / "attributes.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", *FULL_ATTRIBUTES])
        for i, name in enumerate(names):
            writer.writerow([name, *(str(int(v)) for v in full[i])])

    n_train = (2 * n) // 3
    n_val = (n - n_train) // 2
    with open(root / "splits.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "split"])
        for i, name in enumerate(names):
            split = "train" if i < n_train else ("val" if i < n_train + n_val else "test")
            writer.writerow([name, split])
    return root


def take_first(dataset: CuratedDataset, n: int) -> CuratedDataset:
    """First ``n`` samples of a curated dataset, order preserved."""
    return CuratedDataset(
        faces={res: dataset.faces[res][:n] for res in dataset.scales},
        sketches={res: dataset.sketches[res][:n] for res in dataset.scales},
        y_f=dataset.y_f[:n],
        names=dataset.names[:n],
        splits=dataset.splits[:n],
    )


def edge_map(plane: np.ndarray) -> np.ndarray:
    """Gradient-magnitude edges of a 2-D plane (same shape, zero-padded)."""
    gy = np.zeros_like(plane)
    gx = np.zeros_like(plane)
    gy[:-1, :] = np.diff(plane, axis=0)
    gx[:, :-1] = np.diff(plane, axis=1)
    return np.hypot(gy, gx)


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a.ravel().astype(np.float64)
    b = b.ravel().astype(np.float64)
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0:
        return 0.0
    return float((a * b).sum() / denom)
