"""Bridge configuration: model identifiers, device, concurrency, port."""

from __future__ import annotations

import os
from dataclasses import dataclass


@dataclass
class BridgeConfig:
    base_model: str = "runwayml/stable-diffusion-v1-5"
    depth_control_model: str = "lllyasviel/control_v11f1p_sd15_depth"
    inpaint_control_model: str = "lllyasviel/control_v11p_sd15_inpaint"
    position_control_model: str = "lllyasviel/control_v11f1e_sd15_tile"
    image_prompt_adapter: str = "h94/IP-Adapter"
    device: str = "cuda"
    max_concurrent_jobs: int = 1
    port: int = 8580
    # "mock" serves the deterministic procedural pipeline; "diffusers"
    # loads the models above (weights must be present locally)
    engine: str = "mock"

    def __post_init__(self):
        if self.max_concurrent_jobs < 1:
            raise ValueError("max_concurrent_jobs must be >= 1")
        if self.engine not in ("mock", "diffusers"):
            raise ValueError(f"unknown engine {self.engine!r}")

    @classmethod
    def from_env(cls) -> "BridgeConfig":
        return cls(
            base_model=os.environ.get("BRIDGE_BASE_MODEL", cls.base_model),
            device=os.environ.get("BRIDGE_DEVICE", cls.device),
            max_concurrent_jobs=int(os.environ.get("BRIDGE_MAX_JOBS", "1")),
            port=int(os.environ.get("BRIDGE_PORT", "8580")),
            engine=os.environ.get("BRIDGE_ENGINE", "mock"),
        )
