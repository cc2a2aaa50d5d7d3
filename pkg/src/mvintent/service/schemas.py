"""Pydantic request/response models for the retrieval service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    session_loaded: bool
    version: str


class LoadSessionRequest(BaseModel):
    data_dir: str
    checkpoint: str
    pool_split: str = "test"


class SessionInfo(BaseModel):
    data_dir: str
    checkpoint: str
    pool_split: str
    views: list[str]
    n_items: int
    pool_size: int


class IntentRequest(BaseModel):
    item_ids: list[str] = Field(min_length=2)


class IntentResponse(BaseModel):
    alpha: dict[str, float]
    beta: dict[str, float]
    beta_hat: dict[str, float]


class RetrieveRequest(BaseModel):
    item_ids: list[str] = Field(min_length=1)
    mode: str = "output-output"
    k: int = Field(default=100, ge=1)


class RankedItem(BaseModel):
    rank: int
    id: str
    score: float
    per_view_sim: dict[str, float]


class RetrieveResponse(BaseModel):
    mode: str
    results: list[RankedItem]


class ComposeSource(BaseModel):
    item_ids: list[str] = Field(min_length=1)
    views: list[str] = Field(default_factory=list)


class ComposeRequest(BaseModel):
    sources: list[ComposeSource] = Field(min_length=1)
    k: int = Field(default=100, ge=1)


class ComposeResponse(BaseModel):
    alpha: dict[str, float]
    results: list[RankedItem]


class EmbedRequest(BaseModel):
    # Per-view feature rows; every view must supply the same number of rows.
    features: dict[str, list[list[float]]]
    normalize: bool = True


class EmbedResponse(BaseModel):
    z_specific: dict[str, list[list[float]]]
    z_aligned: dict[str, list[list[float]]]


class FeaturizeColorRequest(BaseModel):
    # Either a base64-encoded raw RGB8 buffer with dimensions, or a PPM path.
    pixels_b64: str | None = None
    width: int | None = None
    height: int | None = None
    ppm_path: str | None = None
    joint: bool = True


class FeaturizeColorResponse(BaseModel):
    dim: int
    vector: list[float]
