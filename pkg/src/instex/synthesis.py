"""Backend-agnostic interface to depth/position-conditioned image synthesis.

Two backends ship with the engine: a deterministic procedural stub that
makes the whole pipeline testable offline, and an HTTP client speaking the
generation-bridge wire protocol. The keep-preservation contract (pixels in
KEEP/BACKGROUND regions survive synthesis byte-exactly) is enforced here,
engine-side, after every backend call: inpainting models leak outside
their masks in practice, so the backend is never trusted with it.

Wire protocol (HTTP POST /generate, JSON): {mode, prompt, seed, steps,
strength, width, height, depth_png_b64?, mask_png_b64?, init_png_b64?,
position_png_b64?, style_image_id?} -> {image_png_b64, model_info}.
Depth travels as 16-bit grayscale normalized (far - d) / (far - near), so
near surfaces are bright and background is 0. Style images are uploaded
once via POST /style -> {style_image_id} and referenced by id afterwards.
"""

from __future__ import annotations

import hashlib
import io
import logging
import struct
import time
from base64 import b64decode, b64encode
from dataclasses import dataclass
from enum import Enum

import numpy as np
from PIL import Image

from . import png16
from .errors import BackendError, ConfigError
from .partition import DenoiseSpec, Region, RegionMask, gray_to_region, region_to_gray
from .raster import DepthMap

logger = logging.getLogger(__name__)

DEPTH_BUCKETS = 16
POSITION_BUCKETS_PER_AXIS = 8


class Mode(str, Enum):
    DEPTH2IMG = "depth2img"
    DEPTH_INPAINT = "depth_inpaint"
    UV_REFINE = "uv_refine"
    TEXT2IMG = "text2img"


@dataclass
class SynthesisRequest:
    mode: Mode
    prompt: str
    denoise: DenoiseSpec
    seed: int
    resolution: tuple[int, int]  # (H, W)
    depth: DepthMap | None = None
    region_mask: RegionMask | None = None
    init_image: np.ndarray | None = None
    position_map: object | None = None  # refine.PositionMap
    style_image_id: str | None = None
    near: float = 0.01
    far: float = 10.0

    def validate(self) -> None:
        h, w = self.resolution
        if self.mode in (Mode.DEPTH2IMG, Mode.DEPTH_INPAINT) and self.depth is None:
            raise ConfigError(f"{self.mode.value} requires a depth map")
        if self.mode == Mode.UV_REFINE:
            if self.position_map is None or self.init_image is None:
                raise ConfigError("uv_refine requires a position map and an init image")
        if self.depth is not None and self.depth.resolution != (h, w):
            raise ConfigError("depth resolution does not match request")
        if self.region_mask is not None:
            if self.region_mask.resolution != (h, w):
                raise ConfigError("region mask resolution does not match request")
            if self.init_image is None:
                raise ConfigError("a region mask requires an init image to preserve")
        if self.init_image is not None and self.init_image.shape[:2] != (h, w):
            raise ConfigError("init image resolution does not match request")
        if not self.prompt and self.mode == Mode.TEXT2IMG:
            raise ConfigError("text2img requires a prompt")


@dataclass
class SynthesisResponse:
    image: np.ndarray  # (H, W, 3) uint8
    backend_id: str
    latency_ms: float
    retries: int = 0


def synthesize(req: SynthesisRequest, backend) -> SynthesisResponse:
    """Run one synthesis call and enforce the keep-preservation contract."""
    req.validate()
    response = backend.generate(req)
    h, w = req.resolution
    if response.image.shape[:2] != (h, w):
        raise BackendError(
            f"backend returned {response.image.shape[:2]}, requested {(h, w)}"
        )
    if req.region_mask is not None:
        preserve = (req.region_mask.region == Region.KEEP) | (
            req.region_mask.region == Region.BACKGROUND
        )
        image = response.image.copy()
        image[preserve] = req.init_image[preserve]
        response.image = image
    return response


# ---------------------------------------------------------------------------
# Seeding policy
# ---------------------------------------------------------------------------

def object_base_seed(run_seed: int, object_id: str) -> int:
    digest = hashlib.blake2b(
        struct.pack("<q", run_seed) + object_id.encode("utf-8"),
        digest_size=8, key=b"instex-seed",
    ).digest()
    return struct.unpack("<q", digest)[0] & 0x7FFFFFFFFFFFFFFF


def view_seed(base_seed: int, view_index: int) -> int:
    return (base_seed + view_index) & 0x7FFFFFFFFFFFFFFF


# ---------------------------------------------------------------------------
# Procedural stub backend
# ---------------------------------------------------------------------------

def _prompt_digest(prompt: str) -> bytes:
    return hashlib.sha256(prompt.encode("utf-8")).digest()[:8]


def _hash_color(seed: int, prompt_digest: bytes, depth_bucket: int, pos_bucket: int) -> np.ndarray:
    h = hashlib.blake2b(digest_size=3, key=b"instex-stub")
    h.update(struct.pack("<q", seed))
    h.update(prompt_digest)
    h.update(struct.pack("<h", depth_bucket))
    h.update(struct.pack("<i", pos_bucket))
    return np.frombuffer(h.digest(), dtype=np.uint8).copy()


def depth_buckets(depth: np.ndarray, mask: np.ndarray, near: float, far: float) -> np.ndarray:
    """Quantize foreground depth into DEPTH_BUCKETS levels; -1 off-surface."""
    out = np.full(depth.shape, -1, dtype=np.int32)
    norm = np.clip((far - depth[mask]) / (far - near), 0.0, 1.0)
    out[mask] = np.minimum(DEPTH_BUCKETS - 1, (norm * DEPTH_BUCKETS).astype(np.int32))
    return out


def position_buckets(position: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Quantize [0,1]^3 positions into a folded per-axis grid; -1 invalid.

    Buckets are coarse on purpose: texels adjacent in 3D across a UV seam
    land in the same bucket, so stub colors stay seam-consistent.
    """
    b = np.minimum(POSITION_BUCKETS_PER_AXIS - 1,
                   (position * POSITION_BUCKETS_PER_AXIS).astype(np.int32))
    folded = (b[..., 0] * POSITION_BUCKETS_PER_AXIS + b[..., 1]) * POSITION_BUCKETS_PER_AXIS \
        + b[..., 2]
    return np.where(valid, folded, -1).astype(np.int32)


class ProceduralStubBackend:
    """Pure function of the request: hash-keyed flat colors per depth or
    position bucket, 50/50 blends in UPDATE regions, init passthrough in
    KEEP/BACKGROUND. The desk-scale oracle for every pipeline test."""

    backend_id = "stub"

    def generate(self, req: SynthesisRequest) -> SynthesisResponse:
        t0 = time.perf_counter()
        h, w = req.resolution
        init = req.init_image if req.init_image is not None \
            else np.zeros((h, w, 3), dtype=np.uint8)

        if req.region_mask is not None:
            region = req.region_mask.region
        elif req.depth is not None:
            region = np.where(req.depth.mask, np.uint8(Region.GENERATE),
                              np.uint8(Region.BACKGROUND))
        else:
            region = np.full((h, w), np.uint8(Region.GENERATE))

        d_bucket = np.full((h, w), -1, dtype=np.int32)
        if req.depth is not None:
            d_bucket = depth_buckets(req.depth.depth, req.depth.mask, req.near, req.far)
        p_bucket = np.full((h, w), -1, dtype=np.int32)
        if req.position_map is not None:
            p_bucket = position_buckets(req.position_map.position, req.position_map.valid)

        digest = _prompt_digest(req.prompt)
        key = (d_bucket.astype(np.int64) + 1) * 100000 + (p_bucket.astype(np.int64) + 1)
        uniq, inverse = np.unique(key, return_inverse=True)
        palette = np.zeros((len(uniq), 3), dtype=np.uint8)
        for i, k in enumerate(uniq):
            palette[i] = _hash_color(req.seed, digest,
                                     int(k // 100000) - 1, int(k % 100000) - 1)
        hashed = palette[inverse.reshape(h, w)]

        image = init.copy()
        gen = region == Region.GENERATE
        image[gen] = hashed[gen]
        upd = region == Region.UPDATE
        image[upd] = ((init[upd].astype(np.uint16) + hashed[upd]) // 2).astype(np.uint8)
        latency = (time.perf_counter() - t0) * 1000.0
        return SynthesisResponse(image=image, backend_id=self.backend_id, latency_ms=latency)


# ---------------------------------------------------------------------------
# Wire codec
# ---------------------------------------------------------------------------

def style_image_id(image: np.ndarray) -> str:
    """Content hash of raw pixels (encoder-independent)."""
    h, w = image.shape[:2]
    digest = hashlib.sha256(struct.pack("<II", w, h) + image.tobytes()).hexdigest()
    return f"sha256:{digest}"


def encode_rgb_png(image: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(image.astype(np.uint8), mode="RGB").save(buf, format="PNG")
    return b64encode(buf.getvalue()).decode("ascii")


def decode_rgb_png(data_b64: str) -> np.ndarray:
    img = Image.open(io.BytesIO(b64decode(data_b64)))
    return np.asarray(img.convert("RGB"), dtype=np.uint8)


def encode_depth_png(depth_map: DepthMap, near: float, far: float) -> str:
    norm = np.zeros(depth_map.depth.shape)
    fg = depth_map.mask
    norm[fg] = np.clip((far - depth_map.depth[fg]) / (far - near), 0.0, 1.0)
    arr = np.round(norm * 65535.0).astype(np.uint16)
    return b64encode(png16.write_gray16(arr)).decode("ascii")


def encode_mask_png(mask: RegionMask) -> str:
    buf = io.BytesIO()
    Image.fromarray(region_to_gray(mask.region), mode="L").save(buf, format="PNG")
    return b64encode(buf.getvalue()).decode("ascii")


def decode_mask_png(data_b64: str) -> np.ndarray:
    img = Image.open(io.BytesIO(b64decode(data_b64)))
    return gray_to_region(np.asarray(img.convert("L"), dtype=np.uint8))


def encode_position_png(position: np.ndarray) -> str:
    arr = np.round(np.clip(position, 0.0, 1.0) * 65535.0).astype(np.uint16)
    return b64encode(png16.write_rgb16(arr)).decode("ascii")


def encode_request(req: SynthesisRequest) -> dict:
    h, w = req.resolution
    payload = {
        "mode": req.mode.value,
        "prompt": req.prompt,
        "seed": int(req.seed),
        "steps": int(req.denoise.steps),
        "strength": float(req.denoise.strength),
        "width": int(w),
        "height": int(h),
    }
    if req.depth is not None:
        payload["depth_png_b64"] = encode_depth_png(req.depth, req.near, req.far)
    if req.region_mask is not None:
        payload["mask_png_b64"] = encode_mask_png(req.region_mask)
    if req.init_image is not None:
        payload["init_png_b64"] = encode_rgb_png(req.init_image)
    if req.position_map is not None:
        payload["position_png_b64"] = encode_position_png(req.position_map.position)
    if req.style_image_id is not None:
        payload["style_image_id"] = req.style_image_id
    return payload


class HttpBackend:
    """Client for a generation bridge speaking the wire protocol.

    Retries are safe: a fixed seed makes server-side sampling idempotent,
    so transient 5xx/connection failures are retried with backoff.
    """

    def __init__(self, endpoint: str, timeout: float = 120.0, retries: int = 3,
                 backoff_s: float = 0.5):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff_s = backoff_s
        self.backend_id = f"http:{self.endpoint}"

    def _post(self, path: str, payload: dict) -> tuple[dict, int]:
        import requests

        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff_s * (2 ** (attempt - 1)))
            try:
                resp = requests.post(self.endpoint + path, json=payload, timeout=self.timeout)
            except requests.RequestException as e:
                last_error = e
                logger.warning("bridge request failed (attempt %d): %s", attempt + 1, e)
                continue
            if resp.status_code >= 500:
                last_error = BackendError(f"bridge returned {resp.status_code}")
                logger.warning("bridge returned %d (attempt %d)", resp.status_code, attempt + 1)
                continue
            if resp.status_code != 200:
                raise BackendError(f"bridge rejected request: {resp.status_code} {resp.text}")
            return resp.json(), attempt
        raise BackendError(f"bridge unreachable after {self.retries + 1} attempts: {last_error}")

    def generate(self, req: SynthesisRequest) -> SynthesisResponse:
        t0 = time.perf_counter()
        body, retries = self._post("/generate", encode_request(req))
        if "image_png_b64" not in body:
            raise BackendError("bridge response missing image_png_b64")
        image = decode_rgb_png(body["image_png_b64"])
        if image.shape[:2] != req.resolution:
            raise BackendError(
                f"bridge returned {image.shape[:2]} for a {req.resolution} request"
            )
        latency = (time.perf_counter() - t0) * 1000.0
        return SynthesisResponse(
            image=image,
            backend_id=str(body.get("model_info", self.backend_id)),
            latency_ms=latency,
            retries=retries,
        )

    def upload_style(self, image: np.ndarray) -> str:
        body, _ = self._post("/style", {"image_png_b64": encode_rgb_png(image)})
        if "style_image_id" not in body:
            raise BackendError("bridge /style response missing style_image_id")
        return str(body["style_image_id"])


def make_backend(spec: str):
    """Backend factory: 'stub' or an http(s) URL."""
    if spec == "stub":
        return ProceduralStubBackend()
    if spec.startswith("http://") or spec.startswith("https://"):
        return HttpBackend(spec)
    raise ConfigError(f"unknown backend {spec!r} (use 'stub' or an http URL)")
