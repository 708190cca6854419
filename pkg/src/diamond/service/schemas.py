"""Pydantic request/response models for the restoration service.

Images travel as base64-encoded rawf32 blobs (the package's bit-exact
interchange format), so every endpoint is lossless end to end. Weight
bundles may be referenced by a server-local path or inlined as base64.
"""

from __future__ import annotations

import base64

from pydantic import BaseModel, Field

from ..imagebuf import Image, image_from_rawf32, rawf32_bytes


def encode_image(img: Image) -> str:
    return base64.b64encode(rawf32_bytes(img)).decode("ascii")


def decode_image(payload: str) -> Image:
    return image_from_rawf32(base64.b64decode(payload.encode("ascii")))


class DegradationSpec(BaseModel):
    kind: str = "identity"
    boundary: str = "replicate"
    kernel_size: int = 3
    kernel_sigma: float = 0.5


class PriorSpec(BaseModel):
    kind: str = "gaussian_smooth"
    sigma: float = 1.0
    bundle_path: str | None = None
    bundle_b64: str | None = None


class IterateSpec(BaseModel):
    mu: float = 1.0
    upsilon: float = 1.0
    step: list[float] = Field(default_factory=lambda: [1.0])
    delta: list[float] = Field(default_factory=lambda: [0.0])
    epsilon: list[float] = Field(default_factory=lambda: [0.0])
    outer_iters: int = 30
    tol: float = 0.0


class RestoreRequest(BaseModel):
    task: str = "denoise"
    input_image: str
    reference_image: str | None = None
    degradation: DegradationSpec = Field(default_factory=DegradationSpec)
    prior: PriorSpec = Field(default_factory=PriorSpec)
    iterate: IterateSpec = Field(default_factory=IterateSpec)


class ComboResultModel(BaseModel):
    step: float
    delta: float
    epsilon: float
    k_used: int
    tag: str
    restored_image: str
    trace_csv: str
    warm_start_mismatch: bool
    rmse: float | None = None
    psnr: float | None = None
    psnr_infinite: bool = False
    ssim: float | None = None


class RestoreResponse(BaseModel):
    task: str
    prior: str
    results: list[ComboResultModel]
    summary_csv: str


class DegradeRequest(BaseModel):
    image: str
    degradation: DegradationSpec = Field(default_factory=DegradationSpec)
    sigma255: float = 0.0
    seed: int = 0


class DegradeResponse(BaseModel):
    image: str
    noise_sigma: float


class MetricsRequest(BaseModel):
    image_a: str
    image_b: str


class MetricsResponse(BaseModel):
    rmse: float
    psnr: float | None
    psnr_infinite: bool
    ssim: float
    csv_line: str


class InferRequest(BaseModel):
    image: str
    bundle_path: str | None = None
    bundle_b64: str | None = None


class InferResponse(BaseModel):
    image: str


class HealthResponse(BaseModel):
    status: str
    version: str
