"""Generation pipelines behind the bridge.

MockPipeline is a deterministic procedural generator used for protocol
tests and offline development: it honors the request dimensions, the
region-mask semantics, and the seed, and its output is grounded in the
conditioning images (depth or position buckets pick palette entries).

DiffusersPipeline hosts the real pretrained models. The position-map
conditioning uses a pretrained tile/inpaint control as a stand-in for a
purpose-trained position encoder, documented as an approximation; weights
must be available locally (see scripts/download_models.py).
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .codecs import MASK_GENERATE, MASK_UPDATE
from .config import BridgeConfig


@dataclass
class GenerationJob:
    mode: str
    prompt: str
    seed: int
    steps: int
    strength: float
    height: int
    width: int
    depth: np.ndarray | None = None  # float in [0, 1], near bright
    mask: np.ndarray | None = None  # uint8 region encoding
    init: np.ndarray | None = None  # (H, W, 3) uint8
    position: np.ndarray | None = None  # float in [0, 1], (H, W, 3)
    style_image: np.ndarray | None = None


class MockPipeline:
    """Pure function of the job; no weights, no device, no randomness
    beyond the seeded hash."""

    model_info = "mock-procedural"

    def generate(self, job: GenerationJob) -> np.ndarray:
        h, w = job.height, job.width
        seed_material = struct.pack("<q", job.seed) + job.prompt.encode("utf-8")
        if job.style_image is not None:
            seed_material += job.style_image.tobytes()[:64]
        digest = hashlib.blake2b(seed_material, digest_size=8).digest()
        rng = np.random.default_rng(struct.unpack("<Q", digest)[0])
        palette = rng.integers(30, 226, size=(16, 3), dtype=np.int64).astype(np.uint8)

        if job.depth is not None:
            level = np.minimum(15, (job.depth * 16).astype(np.int64))
        elif job.position is not None:
            folded = (job.position * 8).astype(np.int64)
            level = (folded[..., 0] * 3 + folded[..., 1] * 5 + folded[..., 2] * 7) % 16
        else:
            yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
            level = ((yy * 4 // max(1, h)) * 4 + (xx * 4 // max(1, w))) % 16
        content = palette[level]

        init = job.init if job.init is not None else np.zeros((h, w, 3), np.uint8)
        if job.mask is None:
            return content
        out = init.copy()
        gen = job.mask == MASK_GENERATE
        out[gen] = content[gen]
        upd = job.mask == MASK_UPDATE
        out[upd] = ((init[upd].astype(np.uint16) + content[upd]) // 2).astype(np.uint8)
        # KEEP and BACKGROUND fall through as init
        return out


class DiffusersPipeline:
    """Stable-diffusion pipelines for the four modes.

    Loading is lazy per mode. Requires the `diffusers` extra and local
    weights for the configured model ids.
    """

    def __init__(self, config: BridgeConfig):
        try:
            import torch  # noqa: F401
            import diffusers  # noqa: F401
        except ImportError as e:
            raise RuntimeError(
                "diffusers engine requested but torch/diffusers are not "
                "installed; install instex-bridge[diffusers] or use the mock engine"
            ) from e
        self.config = config
        self.model_info = f"diffusers:{config.base_model}"
        self._pipes: dict[str, object] = {}

    def _load(self, mode: str):
        if mode in self._pipes:
            return self._pipes[mode]
        import torch
        from diffusers import (
            ControlNetModel,
            StableDiffusionControlNetImg2ImgPipeline,
            StableDiffusionControlNetInpaintPipeline,
            StableDiffusionPipeline,
        )

        cfg = self.config
        dtype = torch.float16 if cfg.device == "cuda" else torch.float32
        if mode == "text2img":
            pipe = StableDiffusionPipeline.from_pretrained(cfg.base_model, torch_dtype=dtype)
        elif mode == "depth2img":
            control = ControlNetModel.from_pretrained(cfg.depth_control_model,
                                                      torch_dtype=dtype)
            pipe = StableDiffusionControlNetImg2ImgPipeline.from_pretrained(
                cfg.base_model, controlnet=control, torch_dtype=dtype)
        elif mode == "depth_inpaint":
            control = ControlNetModel.from_pretrained(cfg.depth_control_model,
                                                      torch_dtype=dtype)
            pipe = StableDiffusionControlNetInpaintPipeline.from_pretrained(
                cfg.base_model, controlnet=control, torch_dtype=dtype)
        else:  # uv_refine: position map as a control image
            control = ControlNetModel.from_pretrained(cfg.position_control_model,
                                                      torch_dtype=dtype)
            pipe = StableDiffusionControlNetInpaintPipeline.from_pretrained(
                cfg.base_model, controlnet=control, torch_dtype=dtype)
        pipe = pipe.to(cfg.device)
        if self.config.image_prompt_adapter:
            try:
                pipe.load_ip_adapter(self.config.image_prompt_adapter,
                                     subfolder="models",
                                     weight_name="ip-adapter_sd15.bin")
            except Exception:  # adapter is optional conditioning
                pass
        self._pipes[mode] = pipe
        return pipe

    def generate(self, job: GenerationJob) -> np.ndarray:
        import torch
        from PIL import Image

        pipe = self._load(job.mode)
        generator = torch.Generator(device="cpu").manual_seed(job.seed)
        kwargs = {
            "prompt": job.prompt,
            "num_inference_steps": max(1, job.steps),
            "generator": generator,
            "height": job.height,
            "width": job.width,
        }
        if job.style_image is not None and hasattr(pipe, "set_ip_adapter_scale"):
            kwargs["ip_adapter_image"] = Image.fromarray(job.style_image)
        if job.mode == "text2img":
            result = pipe(**kwargs)
        else:
            control = self._control_image(job)
            init = Image.fromarray(job.init) if job.init is not None else None
            if job.mode == "depth2img":
                result = pipe(image=init or control, control_image=control,
                              strength=max(job.strength, 0.01), **kwargs)
            else:
                mask = Image.fromarray(
                    np.isin(job.mask, (MASK_GENERATE, MASK_UPDATE)).astype(np.uint8) * 255
                )
                result = pipe(image=init, mask_image=mask, control_image=control,
                              strength=max(job.strength, 0.01), **kwargs)
        image = np.asarray(result.images[0].convert("RGB"), dtype=np.uint8)
        if image.shape[:2] != (job.height, job.width):
            image = np.asarray(
                result.images[0].resize((job.width, job.height)).convert("RGB"),
                dtype=np.uint8,
            )
        return image

    @staticmethod
    def _control_image(job: GenerationJob):
        from PIL import Image

        if job.mode in ("depth2img", "depth_inpaint"):
            arr = (job.depth * 255.0).astype(np.uint8)
            return Image.fromarray(np.stack([arr] * 3, axis=-1))
        return Image.fromarray((job.position * 255.0).astype(np.uint8))


def build_pipeline(config: BridgeConfig):
    if config.engine == "mock":
        return MockPipeline()
    return DiffusersPipeline(config)
