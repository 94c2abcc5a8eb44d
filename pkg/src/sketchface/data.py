"""Dataset loading and sample preparation.

Raw inputs follow a CelebA-style layout: an ``images/`` directory, an
``attributes.csv`` table with a 40-name header and one {-1,+1} row per image,
and a ``splits.csv`` assigning each image to train/val/test.  Preparation
turns each raw image into a curated sample: a center-cropped face pyramid, a
derived pencil-sketch pyramid, and the curated attribute vectors.

Everything here is plain numpy; tensors enter the picture only in the
training code.  Images travel as ``H x W x 3`` float arrays, ``[0, 1]``
during preparation and ``[-1, 1]`` once curated.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import archive
from .attributes import FULL_ATTRIBUTES, curate_attributes, sketch_attributes

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")
SPLITS = ("train", "val", "test")

DODGE_EPS = 1e-6
CACHE_VERSION = 1


@dataclass(frozen=True)
class RawSample:
    """One manifest entry before any pixel work."""

    image_path: Path
    attributes_40: np.ndarray
    split: str
    identity_id: str


@dataclass(frozen=True)
class ImagePyramid:
    """Ordered (resolution, image) levels, lowest resolution first."""

    levels: tuple[tuple[int, np.ndarray], ...]

    @property
    def scales(self) -> tuple[int, ...]:
        return tuple(res for res, _ in self.levels)

    def level(self, resolution: int) -> np.ndarray:
        for res, image in self.levels:
            if res == resolution:
                return image
        raise KeyError(f"pyramid has no level at resolution {resolution}")

    @property
    def top(self) -> np.ndarray:
        return self.levels[-1][1]


@dataclass(frozen=True)
class CuratedSample:
    """Training-ready sample: pyramids plus curated attribute vectors."""

    face: ImagePyramid
    sketch: ImagePyramid
    y_s: np.ndarray
    y_f: np.ndarray


def _read_csv_rows(path: Path) -> list[list[str]]:
    with open(path, newline="") as f:
        return [row for row in csv.reader(f) if row]


def load_manifest(root: str | Path, split: str | None = None) -> list[RawSample]:
    """Index a dataset root into raw samples, lexicographic by path.

    ``split`` filters to one of train/val/test; ``None`` returns everything.
    Inconsistencies (an image without an attribute row, a row without an
    image, a missing split assignment) are hard errors naming the file.
    """
    root = Path(root)
    if split is not None and split not in SPLITS:
        raise ValueError(f"unknown split {split!r}; expected one of {SPLITS}")
    image_dir = root / "images"
    if not image_dir.is_dir():
        raise FileNotFoundError(f"no images/ directory under {root}")
    image_paths = sorted(
        p for p in image_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not image_paths:
        raise FileNotFoundError(f"no images under {image_dir}")

    attr_rows = _read_csv_rows(root / "attributes.csv")
    header = attr_rows[0]
    name_col = 0
    if header and header[0].lower() in ("image", "image_id", "filename", "file"):
        header = header[1:]
        name_col = 1
    if tuple(header) != FULL_ATTRIBUTES:
        missing = [n for n in FULL_ATTRIBUTES if n not in header]
        raise ValueError(
            f"attributes.csv header does not list the 40 attribute names "
            f"(missing: {missing[:5]}{'...' if len(missing) > 5 else ''})"
        )
    attr_by_name: dict[str, np.ndarray] = {}
    for row in attr_rows[1:]:
        name = row[0] if name_col else None
        values = row[name_col:]
        if name is None:
            raise ValueError("attributes.csv rows must start with the image filename")
        if len(values) != 40:
            raise ValueError(f"attributes.csv row for {name!r} has {len(values)} values, not 40")
        try:
            vec = np.array([float(v) for v in values], dtype=np.float32)
        except ValueError as exc:
            raise ValueError(f"malformed attribute value in row for {name!r}: {exc}") from None
        if not np.isin(vec, (-1.0, 1.0)).all():
            raise ValueError(f"attribute row for {name!r} contains values outside {{-1,+1}}")
        attr_by_name[name] = vec

    split_by_name: dict[str, str] = {}
    for row in _read_csv_rows(root / "splits.csv"):
        if row[0].lower() in ("image", "image_id", "filename", "file"):
            continue
        if len(row) != 2:
            raise ValueError(f"splits.csv row {row!r} must be filename,split")
        if row[1] not in SPLITS:
            raise ValueError(f"splits.csv assigns unknown split {row[1]!r} to {row[0]!r}")
        split_by_name[row[0]] = row[1]

    samples = []
    for path in image_paths:
        if path.name not in attr_by_name:
            raise ValueError(f"missing attributes for image {path}")
        if path.name not in split_by_name:
            raise ValueError(f"missing split assignment for image {path}")
        samples.append(
            RawSample(
                image_path=path,
                attributes_40=attr_by_name[path.name],
                split=split_by_name[path.name],
                identity_id=path.stem,
            )
        )
    stray = sorted(set(attr_by_name) - {p.name for p in image_paths})
    if stray:
        raise ValueError(f"attributes.csv lists images with no file on disk: {stray[:5]}")
    if split is not None:
        samples = [s for s in samples if s.split == split]
    return samples


def load_image(path: str | Path) -> np.ndarray:
    """Decode an image file to H x W x 3 float64 in [0, 1]."""
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float64) / 255.0
    return arr


def center_crop_resize(image: np.ndarray, out: int) -> np.ndarray:
    """Crop the largest center square and resample it to ``out x out``.

    Resampling is per-channel area averaging (constant images stay
    constant).  Input must be H x W x 3 with H, W >= out / 4.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected H x W x 3 input, got shape {image.shape}")
    h, w = image.shape[:2]
    if h < out / 4 or w < out / 4:
        raise ValueError(f"input {h}x{w} is degenerate for output size {out}")
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    square = image[top : top + side, left : left + side, :]
    if side == out:
        return square.astype(np.float64, copy=True)
    resized = np.empty((out, out, 3), dtype=np.float64)
    for c in range(3):
        plane = Image.fromarray(square[:, :, c].astype(np.float32), mode="F")
        resized[:, :, c] = np.asarray(plane.resize((out, out), Image.BOX), dtype=np.float64)
    return resized


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Discrete Gaussian taps at offsets -r..r, r = ceil(3 sigma), normalized.

    Normalization accumulates the raw taps in ascending index order so an
    independent scalar implementation can reproduce the weights bit-exactly.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    radius = math.ceil(3.0 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    raw = np.exp(-(offsets * offsets) / (2.0 * sigma * sigma))
    total = 0.0
    for value in raw:
        total += float(value)
    return raw / total


def _blur_axis0(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    radius = (len(kernel) - 1) // 2
    h = plane.shape[0]
    padded = np.pad(plane, ((radius, radius), (0, 0)), mode="edge")
    out = np.zeros_like(plane)
    for j, weight in enumerate(kernel):
        out += weight * padded[j : j + h, :]
    return out


def gaussian_blur(plane: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur of a 2-D float64 plane with edge padding.

    Taps accumulate in ascending offset order, rows first then columns;
    the scalar oracle in the test suite mirrors this exact op order.
    """
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise ValueError(f"expected a 2-D plane, got shape {plane.shape}")
    kernel = gaussian_kernel(sigma)
    blurred = _blur_axis0(plane, kernel)
    blurred = _blur_axis0(blurred.T, kernel).T
    return blurred


def pencil_sketch(face: np.ndarray, blur_sigma: float) -> np.ndarray:
    """Derive a pencil sketch from an RGB face, H x W x 3 [0,1] -> H x W x 1.

    Steps: luminance (0.299, 0.587, 0.114), invert, Gaussian blur of the
    inverted image, then a dodge blend ``gray / (1 - blur + 1e-6)`` clamped
    to [0, 1].  The result is quantized to 256 levels, matching the 8-bit
    arithmetic of the recipe this reproduces; quantization is also what
    makes mid-to-bright uniform inputs map to the all-white sketch exactly
    (uniform inputs darker than ~5e-4 fall below the dodge guard).
    """
    face = np.asarray(face, dtype=np.float64)
    if face.ndim != 3 or face.shape[2] != 3:
        raise ValueError(f"expected H x W x 3 input, got shape {face.shape}")
    if blur_sigma <= 0:
        raise ValueError("blur_sigma must be positive")
    gray = 0.299 * face[:, :, 0] + 0.587 * face[:, :, 1] + 0.114 * face[:, :, 2]
    inverted = 1.0 - gray
    blurred = gaussian_blur(inverted, blur_sigma)
    dodge = gray / (1.0 - blurred + DODGE_EPS)
    sketch = np.clip(dodge, 0.0, 1.0)
    sketch = np.round(sketch * 255.0) / 255.0
    return sketch[:, :, np.newaxis]


def default_blur_sigma(resolution: int) -> float:
    """Default sketch blur bandwidth scales with working resolution."""
    return resolution / 10.0


def build_pyramid(image: np.ndarray, scales: list[int] | tuple[int, ...]) -> ImagePyramid:
    """Area-average an H x W x 3 image down to each requested scale.

    ``scales`` must be strictly ascending with the top scale equal to the
    input resolution, and every scale must divide the top resolution.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != image.shape[1]:
        raise ValueError(f"expected a square H x H x C image, got shape {image.shape}")
    scales = tuple(int(s) for s in scales)
    if list(scales) != sorted(set(scales)):
        raise ValueError(f"scales must be strictly ascending, got {scales}")
    top = image.shape[0]
    if scales[-1] != top:
        raise ValueError(f"top scale {scales[-1]} does not equal input resolution {top}")
    levels = []
    for scale in scales:
        if top % scale:
            raise ValueError(f"scale {scale} does not divide top resolution {top}")
        factor = top // scale
        if factor == 1:
            levels.append((scale, image.copy()))
        else:
            blocks = image.reshape(scale, factor, scale, factor, image.shape[2])
            levels.append((scale, blocks.mean(axis=(1, 3))))
    return ImagePyramid(levels=tuple(levels))


def prepare_sample(
    raw: RawSample,
    size: int = 64,
    scales: tuple[int, ...] = (16, 32, 64),
    blur_sigma: float | None = None,
) -> CuratedSample:
    """Run the full preparation chain for one raw sample."""
    if blur_sigma is None:
        blur_sigma = default_blur_sigma(size)
    face01 = center_crop_resize(load_image(raw.image_path), size)
    sketch01 = pencil_sketch(face01, blur_sigma)
    sketch01 = np.repeat(sketch01, 3, axis=2)
    y_f = curate_attributes(raw.attributes_40[np.newaxis, :], list(FULL_ATTRIBUTES))[0]
    return CuratedSample(
        face=build_pyramid(face01 * 2.0 - 1.0, scales),
        sketch=build_pyramid(sketch01 * 2.0 - 1.0, scales),
        y_s=sketch_attributes(y_f).copy(),
        y_f=y_f,
    )


class CuratedDataset:
    """In-memory stack of curated samples with per-scale arrays.

    ``faces[res]`` and ``sketches[res]`` are ``(N, res, res, 3)`` float32 in
    [-1, 1]; ``y_f`` is ``(N, 23)`` and ``y_s`` its texture slice.  Order
    follows the manifest (lexicographic by path).
    """

    def __init__(
        self,
        faces: dict[int, np.ndarray],
        sketches: dict[int, np.ndarray],
        y_f: np.ndarray,
        names: list[str],
        splits: list[str],
    ):
        self.scales = tuple(sorted(faces))
        self.faces = faces
        self.sketches = sketches
        self.y_f = np.asarray(y_f, dtype=np.float32)
        self.y_s = sketch_attributes(self.y_f)
        self.names = list(names)
        self.splits = list(splits)
        n = len(self.y_f)
        for res in self.scales:
            for stack, label in ((faces, "faces"), (sketches, "sketches")):
                if stack[res].shape != (n, res, res, 3):
                    raise ValueError(
                        f"{label}[{res}] has shape {stack[res].shape}, expected {(n, res, res, 3)}"
                    )
        if not (len(names) == len(splits) == n):
            raise ValueError("names, splits and attribute rows disagree in length")

    def __len__(self) -> int:
        return len(self.y_f)

    def sample(self, index: int) -> CuratedSample:
        face = ImagePyramid(
            tuple((res, self.faces[res][index].astype(np.float64)) for res in self.scales)
        )
        sketch = ImagePyramid(
            tuple((res, self.sketches[res][index].astype(np.float64)) for res in self.scales)
        )
        return CuratedSample(face=face, sketch=sketch, y_s=self.y_s[index], y_f=self.y_f[index])

    def subset(self, split: str) -> "CuratedDataset":
        keep = [i for i, s in enumerate(self.splits) if s == split]
        if not keep:
            raise ValueError(f"no samples in split {split!r}")
        idx = np.array(keep)
        return CuratedDataset(
            faces={res: self.faces[res][idx] for res in self.scales},
            sketches={res: self.sketches[res][idx] for res in self.scales},
            y_f=self.y_f[idx],
            names=[self.names[i] for i in keep],
            splits=[self.splits[i] for i in keep],
        )

    def sample_mismatch(self, y: np.ndarray, rng: np.random.Generator) -> int:
        """Index of a uniformly drawn sample whose y_f differs from ``y``."""
        return mismatch_index(self.y_f, np.asarray(y, dtype=np.float32), rng)


def mismatch_index(attrs: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> int:
    """Uniform draw among rows of ``attrs`` that differ from ``y`` somewhere."""
    differs = (attrs != y[np.newaxis, :]).any(axis=1)
    candidates = np.flatnonzero(differs)
    if candidates.size == 0:
        raise ValueError("no mismatch available: every attribute row equals the query")
    return int(candidates[rng.integers(0, candidates.size)])


def prepare_dataset(
    samples: list[RawSample],
    size: int = 64,
    scales: tuple[int, ...] = (16, 32, 64),
    blur_sigma: float | None = None,
) -> CuratedDataset:
    """Prepare every raw sample and stack the results per scale."""
    if not samples:
        raise ValueError("no samples to prepare")
    faces = {res: [] for res in scales}
    sketches = {res: [] for res in scales}
    y_rows = []
    for raw in samples:
        curated = prepare_sample(raw, size=size, scales=scales, blur_sigma=blur_sigma)
        for res in scales:
            faces[res].append(curated.face.level(res).astype(np.float32))
            sketches[res].append(curated.sketch.level(res).astype(np.float32))
        y_rows.append(curated.y_f)
    return CuratedDataset(
        faces={res: np.stack(faces[res]) for res in scales},
        sketches={res: np.stack(sketches[res]) for res in scales},
        y_f=np.stack(y_rows),
        names=[s.image_path.name for s in samples],
        splits=[s.split for s in samples],
    )


def save_cache(dataset: CuratedDataset, cache_dir: str | Path) -> None:
    """Write one binary record per sample under ``cache_dir``."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    for i, name in enumerate(dataset.names):
        arrays = {"y_f": dataset.y_f[i]}
        for res in dataset.scales:
            arrays[f"face_{res}"] = dataset.faces[res][i]
            arrays[f"sketch_{res}"] = dataset.sketches[res][i]
        meta = {
            "kind": "curated-sample",
            "version": CACHE_VERSION,
            "resolutions": list(dataset.scales),
            "split": dataset.splits[i],
            "name": name,
        }
        archive.write_archive(cache_dir / (Path(name).stem + ".sample"), arrays, meta)


def load_cache(cache_dir: str | Path, split: str | None = None) -> CuratedDataset:
    """Load a cache directory written by :func:`save_cache`."""
    cache_dir = Path(cache_dir)
    record_paths = sorted(cache_dir.glob("*.sample"))
    if not record_paths:
        raise FileNotFoundError(f"no cached samples under {cache_dir}")
    faces: dict[int, list[np.ndarray]] = {}
    sketches: dict[int, list[np.ndarray]] = {}
    y_rows, names, splits = [], [], []
    scales: tuple[int, ...] | None = None
    for path in record_paths:
        arrays, meta = archive.read_archive(path)
        if meta.get("kind") != "curated-sample" or meta.get("version") != CACHE_VERSION:
            raise ValueError(f"{path}: not a curated-sample record of version {CACHE_VERSION}")
        record_scales = tuple(meta["resolutions"])
        if scales is None:
            scales = record_scales
            faces = {res: [] for res in scales}
            sketches = {res: [] for res in scales}
        elif record_scales != scales:
            raise ValueError(f"{path}: resolution list {record_scales} != {scales}")
        if split is not None and meta["split"] != split:
            continue
        for res in scales:
            faces[res].append(arrays[f"face_{res}"])
            sketches[res].append(arrays[f"sketch_{res}"])
        y_rows.append(arrays["y_f"])
        names.append(meta["name"])
        splits.append(meta["split"])
    if not names:
        raise ValueError(f"no cached samples for split {split!r} under {cache_dir}")
    assert scales is not None
    return CuratedDataset(
        faces={res: np.stack(faces[res]) for res in scales},
        sketches={res: np.stack(sketches[res]) for res in scales},
        y_f=np.stack(y_rows),
        names=names,
        splits=splits,
    )
