"""FastAPI application implementing the generation wire protocol.

POST /generate -> {image_png_b64, model_info}
POST /style    -> {style_image_id}
GET  /health   -> {model_info}

Errors: 400 schema violation (including mode-conditional requirements and
undecodable payloads), 503 job queue full, 500 inference failure.
"""

from __future__ import annotations

import logging
import threading
from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from .codecs import content_id, decode_gray8, decode_png16, decode_rgb8, encode_rgb8
from .config import BridgeConfig
from .pipelines import GenerationJob, build_pipeline

logger = logging.getLogger(__name__)


class GenerateBody(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["depth2img", "depth_inpaint", "uv_refine", "text2img"]
    prompt: str
    seed: int = Field(ge=0)
    steps: int = Field(ge=0)
    strength: float = Field(ge=0.0, le=1.0)
    width: int = Field(ge=1)
    height: int = Field(ge=1)
    depth_png_b64: str | None = None
    mask_png_b64: str | None = None
    init_png_b64: str | None = None
    position_png_b64: str | None = None
    style_image_id: str | None = None


class StyleBody(BaseModel):
    model_config = ConfigDict(extra="forbid")

    image_png_b64: str


def create_app(config: BridgeConfig | None = None, pipeline=None) -> FastAPI:
    config = config or BridgeConfig.from_env()
    pipeline = pipeline or build_pipeline(config)
    app = FastAPI(title="instex-bridge", version="0.1.0")
    app.state.config = config
    app.state.pipeline = pipeline
    app.state.slots = threading.BoundedSemaphore(config.max_concurrent_jobs)
    app.state.styles = {}

    @app.exception_handler(RequestValidationError)
    async def schema_violation(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.get("/health")
    def health():
        return {"model_info": pipeline.model_info}

    @app.post("/style")
    def upload_style(body: StyleBody):
        try:
            image = decode_rgb8(body.image_png_b64)
        except Exception as e:
            raise HTTPException(status_code=400, detail=f"undecodable style image: {e}")
        style_id = content_id(image)
        app.state.styles[style_id] = image
        return {"style_image_id": style_id}

    @app.post("/generate")
    def generate(body: GenerateBody):
        if body.mode in ("depth2img", "depth_inpaint") and body.depth_png_b64 is None:
            raise HTTPException(status_code=400,
                                detail=f"{body.mode} requires depth_png_b64")
        if body.mode == "uv_refine" and (body.position_png_b64 is None
                                         or body.init_png_b64 is None):
            raise HTTPException(status_code=400,
                                detail="uv_refine requires position_png_b64 and init_png_b64")
        try:
            job = _decode_job(body, app.state.styles)
        except HTTPException:
            raise
        except Exception as e:
            raise HTTPException(status_code=400, detail=f"undecodable payload: {e}")

        if not app.state.slots.acquire(blocking=False):
            raise HTTPException(status_code=503, detail="job queue full")
        try:
            image = pipeline.generate(job)
        except HTTPException:
            raise
        except Exception as e:
            logger.exception("inference failure")
            raise HTTPException(status_code=500, detail=f"inference failure: {e}")
        finally:
            app.state.slots.release()
        if image.shape[:2] != (body.height, body.width):
            raise HTTPException(
                status_code=500,
                detail=f"pipeline produced {image.shape[:2]}, "
                       f"requested {(body.height, body.width)}",
            )
        return {"image_png_b64": encode_rgb8(image), "model_info": pipeline.model_info}

    return app


def _decode_job(body: GenerateBody, styles: dict) -> GenerationJob:
    h, w = body.height, body.width
    depth = None
    if body.depth_png_b64 is not None:
        raw = decode_png16(body.depth_png_b64)
        if raw.ndim != 2:
            raise HTTPException(status_code=400, detail="depth must be 16-bit grayscale")
        _check_dims("depth", raw.shape, (h, w))
        depth = raw.astype(np.float64) / 65535.0
    mask = None
    if body.mask_png_b64 is not None:
        mask = decode_gray8(body.mask_png_b64)
        _check_dims("mask", mask.shape, (h, w))
    init = None
    if body.init_png_b64 is not None:
        init = decode_rgb8(body.init_png_b64)
        _check_dims("init", init.shape[:2], (h, w))
    position = None
    if body.position_png_b64 is not None:
        raw = decode_png16(body.position_png_b64)
        if raw.ndim != 3:
            raise HTTPException(status_code=400, detail="position map must be 16-bit RGB")
        _check_dims("position", raw.shape[:2], (h, w))
        position = raw.astype(np.float64) / 65535.0
    style_image = styles.get(body.style_image_id) if body.style_image_id else None
    return GenerationJob(
        mode=body.mode, prompt=body.prompt, seed=body.seed, steps=body.steps,
        strength=body.strength, height=h, width=w, depth=depth, mask=mask,
        init=init, position=position, style_image=style_image,
    )


def _check_dims(name: str, got, expected) -> None:
    if tuple(got) != tuple(expected):
        raise HTTPException(status_code=400,
                            detail=f"{name} is {tuple(got)}, request says {tuple(expected)}")
