"""HTTP synthesis service over a loaded checkpoint pair.

Stateless between requests: handlers read the immutable loaded model, so a
request with the same attributes, seed and model hash always yields the
same image bytes.  The texture slice sent to the sketch stage is exactly
coordinates 0..16 of the request vector, audited inside the synthesis call.
"""

from __future__ import annotations

import base64
import random
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field, field_validator

from .attributes import FACE_ATTRIBUTES, FACE_DIM, attribute_kind, face_attribute_index
from .synthesis import PROGRESSION_WEIGHTS, LoadedModel, load_model_pair, png_bytes, progression, synthesize


class SynthesisRequest(BaseModel):
    attributes: list[float] = Field(min_length=FACE_DIM, max_length=FACE_DIM)
    seed: int | None = None
    count: int = Field(default=1, ge=1)
    return_sketch: bool = False

    @field_validator("attributes")
    @classmethod
    def _clamp(cls, values: list[float]) -> list[float]:
        return [min(1.0, max(-1.0, float(v))) for v in values]


class SynthesisResponse(BaseModel):
    images: list[str]
    sketches: list[str] | None = None
    attributes: list[float]
    seed_used: int
    model_hash: str


class ProgressionRequest(BaseModel):
    attribute_name: str
    base_attributes: list[float] = Field(min_length=FACE_DIM, max_length=FACE_DIM)
    seed: int = 0

    @field_validator("base_attributes")
    @classmethod
    def _clamp(cls, values: list[float]) -> list[float]:
        return [min(1.0, max(-1.0, float(v))) for v in values]


class ProgressionResponse(BaseModel):
    attribute_name: str
    weights: list[float]
    images: list[str]
    seed_used: int
    model_hash: str


def _b64(image: np.ndarray) -> str:
    return base64.b64encode(png_bytes(image)).decode("ascii")


def create_app(
    stage1: str | Path | None = None,
    stage2: str | Path | None = None,
    model: LoadedModel | None = None,
    max_count: int = 16,
) -> FastAPI:
    """Build the service app around a checkpoint pair (or preloaded model)."""
    if model is None:
        if stage1 is None or stage2 is None:
            raise ValueError("create_app needs either a model or both checkpoint paths")
        model = load_model_pair(stage1, stage2)
    app = FastAPI(title="sketchface synthesis service")
    app.state.model = model
    app.state.max_count = max_count

    def _model() -> LoadedModel:
        loaded = app.state.model
        if loaded is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        return loaded

    @app.get("/health")
    def health():
        return {"status": "ok", "model_hash": _model().model_hash}

    @app.get("/attributes")
    def attributes():
        return {
            "attributes": [
                {"name": name, "kind": attribute_kind(name), "index": i}
                for i, name in enumerate(FACE_ATTRIBUTES)
            ]
        }

    @app.post("/synthesize", response_model=SynthesisResponse)
    def synthesize_endpoint(request: SynthesisRequest):
        loaded = _model()
        if request.count > app.state.max_count:
            raise HTTPException(
                status_code=400,
                detail=f"count {request.count} exceeds the configured maximum {app.state.max_count}",
            )
        seed_used = request.seed if request.seed is not None else random.randrange(2**31)
        rows = np.repeat(
            np.asarray(request.attributes, dtype=np.float32)[np.newaxis, :],
            request.count, axis=0,
        )
        faces, sketches = synthesize(loaded, rows, seed_used)
        return SynthesisResponse(
            images=[_b64(face) for face in faces],
            sketches=[_b64(s) for s in sketches] if request.return_sketch else None,
            attributes=list(request.attributes),
            seed_used=seed_used,
            model_hash=loaded.model_hash,
        )

    @app.post("/progression", response_model=ProgressionResponse)
    def progression_endpoint(request: ProgressionRequest):
        loaded = _model()
        try:
            index = face_attribute_index(request.attribute_name)
        except KeyError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        faces, weights = progression(
            loaded,
            np.asarray(request.base_attributes, dtype=np.float32),
            request.attribute_name,
            request.seed,
        )
        return ProgressionResponse(
            attribute_name=FACE_ATTRIBUTES[index],
            weights=list(weights),
            images=[_b64(face) for face in faces],
            seed_used=request.seed,
            model_hash=loaded.model_hash,
        )

    return app
