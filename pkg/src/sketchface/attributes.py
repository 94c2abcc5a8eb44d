"""Attribute vocabulary and curation.

The full annotation set carries 40 binary attributes per image.  Only a
subset is visually grounded enough to drive synthesis: 17 texture attributes
condition the sketch stage and those 17 plus 6 color attributes condition the
face stage.  Attribute vectors are float tensors with entries in {-1, +1}
(or continuous values in [-1, 1] when interpolating at synthesis time).
"""

from __future__ import annotations

import numpy as np

# Canonical column order of the 40-attribute annotation CSV.
FULL_ATTRIBUTES: tuple[str, ...] = (
    "5_o_Clock_Shadow",
    "Arched_Eyebrows",
    "Attractive",
    "Bags_Under_Eyes",
    "Bald",
    "Bangs",
    "Big_Lips",
    "Big_Nose",
    "Black_Hair",
    "Blond_Hair",
    "Blurry",
    "Brown_Hair",
    "Bushy_Eyebrows",
    "Chubby",
    "Double_Chin",
    "Eyeglasses",
    "Goatee",
    "Gray_Hair",
    "Heavy_Makeup",
    "High_Cheekbones",
    "Male",
    "Mouth_Slightly_Open",
    "Mustache",
    "Narrow_Eyes",
    "No_Beard",
    "Oval_Face",
    "Pale_Skin",
    "Pointy_Nose",
    "Receding_Hairline",
    "Rosy_Cheeks",
    "Sideburns",
    "Smiling",
    "Straight_Hair",
    "Wavy_Hair",
    "Wearing_Earrings",
    "Wearing_Hat",
    "Wearing_Lipstick",
    "Wearing_Necklace",
    "Wearing_Necktie",
    "Young",
)

# Texture attributes: geometry and shading cues that survive in a sketch.
TEXTURE_ATTRIBUTES: tuple[str, ...] = (
    "5_o_Clock_Shadow",
    "Arched_Eyebrows",
    "Bags_Under_Eyes",
    "Bald",
    "Bangs",
    "Big_Lips",
    "Big_Nose",
    "Bushy_Eyebrows",
    "Chubby",
    "Eyeglasses",
    "Male",
    "Mouth_Slightly_Open",
    "Narrow_Eyes",
    "No_Beard",
    "Oval_Face",
    "Smiling",
    "Young",
)

# Color attributes: only meaningful once the image has chroma.
COLOR_ATTRIBUTES: tuple[str, ...] = (
    "Black_Hair",
    "Blond_Hair",
    "Brown_Hair",
    "Gray_Hair",
    "Pale_Skin",
    "Rosy_Cheeks",
)

# Face-stage vocabulary: texture block first, then the color block.
FACE_ATTRIBUTES: tuple[str, ...] = TEXTURE_ATTRIBUTES + COLOR_ATTRIBUTES

SKETCH_DIM = len(TEXTURE_ATTRIBUTES)
FACE_DIM = len(FACE_ATTRIBUTES)

_FULL_INDEX = {name: i for i, name in enumerate(FULL_ATTRIBUTES)}
_FACE_INDEX = {name: i for i, name in enumerate(FACE_ATTRIBUTES)}
_FACE_INDEX_LOWER = {name.lower(): i for i, name in enumerate(FACE_ATTRIBUTES)}


def attribute_kind(name: str) -> str:
    """Return ``"texture"`` or ``"color"`` for a curated attribute name."""
    if name in TEXTURE_ATTRIBUTES:
        return "texture"
    if name in COLOR_ATTRIBUTES:
        return "color"
    raise KeyError(f"not a curated attribute: {name!r}")


def face_attribute_index(name: str) -> int:
    """Index of a curated attribute in the face-stage vector.

    Lookup is case-insensitive so user-facing entry points can accept
    ``eyeglasses`` as well as ``Eyeglasses``.
    """
    try:
        return _FACE_INDEX_LOWER[name.lower()]
    except KeyError:
        raise KeyError(f"unknown attribute name: {name!r}") from None


def curate_attributes(rows: np.ndarray, header: list[str] | tuple[str, ...]) -> np.ndarray:
    """Project full annotation rows onto the curated face-stage order.

    ``rows`` is ``(N, len(header))`` with entries in {-1, +1}; ``header``
    names its columns.  Returns ``(N, 23)`` float32 in the canonical order
    (17 texture attributes followed by 6 color attributes).  Raises
    ``ValueError`` when a curated attribute is missing from the header or a
    value is not in {-1, +1}.
    """
    rows = np.asarray(rows)
    if rows.ndim != 2 or rows.shape[1] != len(header):
        raise ValueError(
            f"annotation shape {rows.shape} does not match header of {len(header)} columns"
        )
    col = {name: i for i, name in enumerate(header)}
    missing = [name for name in FACE_ATTRIBUTES if name not in col]
    if missing:
        raise ValueError(f"annotation header lacks curated attributes: {missing}")
    picked = rows[:, [col[name] for name in FACE_ATTRIBUTES]].astype(np.float32)
    bad = ~np.isin(picked, (-1.0, 1.0))
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ValueError(
            f"attribute value {picked[i, j]!r} at row {i}, column {FACE_ATTRIBUTES[j]!r} "
            "is not -1 or +1"
        )
    return picked


def sketch_attributes(face_attrs: np.ndarray) -> np.ndarray:
    """Slice the texture block out of face-stage vectors ``(..., 23) -> (..., 17)``."""
    face_attrs = np.asarray(face_attrs)
    if face_attrs.shape[-1] != FACE_DIM:
        raise ValueError(f"expected trailing dimension {FACE_DIM}, got {face_attrs.shape[-1]}")
    return face_attrs[..., :SKETCH_DIM]
